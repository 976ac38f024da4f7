from typing import Dict, Generic, Iterable, List, Optional, TypeVar
import logging

from core.errors import ConfigError


T = TypeVar("T")


class Registry(Generic[T]):
    """Registry of named simulation components (MCS modes, path-loss models, service classes)"""

    def __init__(self, kind: str):
        self.kind = kind
        self.entries: Dict[str, T] = {}
        self.aliases: Dict[str, str] = {}
        self.logger = logging.getLogger(__name__)

    @staticmethod
    def normalize(name: str) -> str:
        """Lower-case a name and strip separators so '16QAM 3/4' and '16qam34' match"""
        return "".join(ch for ch in name.lower() if ch.isalnum())

    def register(self, name: str, entry: T, aliases: Iterable[str] = ()) -> None:
        """Register a new entry under a canonical name"""
        if name in self.entries:
            self.logger.warning(f"{self.kind} {name} already registered, overwriting")

        self.entries[name] = entry
        self.aliases[self.normalize(name)] = name
        for alias in aliases:
            self.aliases[self.normalize(alias)] = name
        self.logger.debug(f"Registered {self.kind}: {name}")

    def get(self, name: str) -> Optional[T]:
        """Get an entry by name or alias"""
        canonical = self.aliases.get(self.normalize(name))
        if canonical is None:
            return None
        return self.entries[canonical]

    def canonical(self, name: str) -> str:
        """Resolve an alias to the canonical name"""
        self.require(name)
        return self.aliases[self.normalize(name)]

    def require(self, name: str) -> T:
        """Get an entry or raise a ConfigError listing the valid names"""
        entry = self.get(name)
        if entry is None:
            valid = ", ".join(self.names())
            raise ConfigError(f"Unknown {self.kind} '{name}'; valid names: {valid}")
        return entry

    def names(self) -> List[str]:
        """List canonical names in registration order"""
        return list(self.entries.keys())

    def __contains__(self, name: str) -> bool:
        return self.get(name) is not None

    def __len__(self) -> int:
        return len(self.entries)
