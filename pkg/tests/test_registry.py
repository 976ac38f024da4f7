import logging

import pytest

from core.errors import ConfigError
from core.registry import Registry


def test_lookup_by_name_and_alias():
    registry: Registry[int] = Registry("thing")
    registry.register("alpha", 1, aliases=["First One"])

    assert registry.get("alpha") == 1
    assert registry.get("FIRST-one") == 1
    assert registry.canonical("first one") == "alpha"
    assert "Alpha" in registry
    assert registry.get("beta") is None
    assert len(registry) == 1


def test_normalize_strips_separators():
    assert Registry.normalize("16QAM 3/4") == "16qam34"
    assert Registry.normalize("AMC-1") == "amc1"


def test_require_lists_valid_names():
    registry: Registry[int] = Registry("widget")
    registry.register("a", 1)
    registry.register("b", 2)

    with pytest.raises(ConfigError, match="Unknown widget 'c'; valid names: a, b"):
        registry.require("c")


def test_overwrite_logs_a_warning(caplog):
    registry: Registry[int] = Registry("thing")
    registry.register("a", 1)
    with caplog.at_level(logging.WARNING):
        registry.register("a", 2)

    assert registry.require("a") == 2
    assert "already registered" in caplog.text
    assert registry.names() == ["a"]
