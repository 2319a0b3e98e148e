import pytest  # noqa: F401


def pytest_collection_modifyitems(config, items):
    # run the acceptance gate last so unit-level failures surface first
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")
