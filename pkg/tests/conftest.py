def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size simulated runs, deselect with -m 'not slow'")
