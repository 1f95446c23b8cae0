import numpy as np
import pytest

from lipchord.chordal import CliqueSet, dense_clique, maximal_cliques
from lipchord.network import (
    ActivationSpec,
    Network,
    gaussian_network,
    naive_lip,
    random_network,
)
from lipchord.sdp import DimsProfile
from lipchord.verify import decomposition_roundtrip, lower_bound_sampling


def identity_net():
    I2 = np.eye(2)
    z = np.zeros(2)
    return Network((2, 2, 2), (I2, I2), (z, z), ActivationSpec.relu())


class TestLowerBoundSampling:
    def test_identity_network_reports_one(self):
        rep = lower_bound_sampling(identity_net(), 1000, 0, seed=0)
        assert rep.best_quotient == pytest.approx(1.0, abs=1e-12)

    def test_scalar_chain_local_slope(self):
        c = 2.5
        net = Network(
            (1, 1, 1),
            (np.array([[c]]), np.array([[1.0]])),
            (np.zeros(1), np.zeros(1)),
            ActivationSpec.relu(),
        )
        rep = lower_bound_sampling(net, 0, 2000, radius=1e-4, seed=1)
        assert rep.best_quotient == pytest.approx(c, rel=1e-9)
        assert rep.mode == "local-perturbation"

    def test_floor_below_naive(self):
        for kind in ("relu", "tanh"):
            net = gaussian_network((2, 5, 5, 2), seed=3, kind=kind)
            rep = lower_bound_sampling(net, 3000, 3000, seed=2)
            assert rep.best_quotient <= naive_lip(net)

    def test_monotone_in_sample_count(self):
        net = random_network(5, 4, seed=4)
        small = lower_bound_sampling(net, 500, 500, seed=5)
        large = lower_bound_sampling(net, 2000, 2000, seed=5)
        assert large.best_quotient >= small.best_quotient

    def test_deterministic_and_reproducible_pair(self):
        net = random_network(5, 4, seed=6)
        a = lower_bound_sampling(net, 800, 800, seed=7)
        b = lower_bound_sampling(net, 800, 800, seed=7)
        assert a.best_quotient == b.best_quotient and a.best_pair == b.best_pair
        # the recorded pair reproduces the recorded quotient
        from lipchord.network import eval_forward

        x, y = (np.array(v) for v in a.best_pair)
        q = np.linalg.norm(eval_forward(net, x) - eval_forward(net, y)) / (
            np.linalg.norm(x - y)
        )
        assert q == pytest.approx(a.best_quotient, rel=1e-12)

    def test_sector_kind_rejected(self):
        net = gaussian_network((2, 3, 2), seed=0, kind="sector")
        with pytest.raises(ValueError):
            lower_bound_sampling(net, 10, 10)

    def test_report_serializable(self):
        import json

        rep = lower_bound_sampling(identity_net(), 50, 50, seed=0)
        doc = json.loads(json.dumps(rep.as_dict()))
        assert doc["samples"] == 100 and doc["seed"] == 0


class TestDecompositionRoundtrip:
    def test_single_clique(self):
        assert decomposition_roundtrip(dense_clique(6), seed=0)

    def test_hand_checkable_three_by_three(self):
        # two overlapping 2-intervals on N = 3
        assert decomposition_roundtrip(CliqueSet(3, ((1, 2), (2, 3))), seed=1)

    def test_closed_form_cliques(self):
        dims = DimsProfile.from_layer_sizes((3, 3, 3, 3, 3, 2))
        for tau in (0, 2):
            cliques = maximal_cliques(dims, tau)
            assert decomposition_roundtrip(cliques, seed=2)

    def test_desk_scale_guard(self):
        with pytest.raises(ValueError, match="desk scale"):
            decomposition_roundtrip(dense_clique(100), seed=0)
