import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Print one PASS/FAIL line per acceptance criterion."""
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        label = getattr(item.function, "_criterion", None)
        if label:
            print(f"\nACCEPTANCE {label}: {'PASS' if rep.passed else 'FAIL'}")
