import pytest

from acfstego.config import SecretKey, SecurityParams, StegoConfig, derive_partition

KEY_HEX = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f"


@pytest.fixture
def key():
    return SecretKey.from_hex(KEY_HEX)


@pytest.fixture
def cfg(key):
    return StegoConfig(key, SecurityParams(k=8, margin=0.25), session_id=b"test-session")


@pytest.fixture
def pmap16(cfg):
    return derive_partition(16, cfg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
