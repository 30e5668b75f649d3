# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

from abc import ABC
from dataclasses import dataclass
from typing import Any, Dict, List

DOCUMENT_KINDS = (
    "model",
    "evidence",
    "topology",
    "query",
    "trajectories",
    "report",
)


@dataclass
class ServiceSettings:
    """Dataclass for service settings."""

    name: str
    argument: str
    required: bool


class IStorage(ABC):
    @classmethod
    def configure(cls, settings: Any):
        """
        Run actions to test, configure using the settings.
        """
        raise NotImplementedError

    @classmethod
    def settings(cls) -> List[ServiceSettings]:
        """
        Define all the ServiceSettings required in settings.
        """
        raise NotImplementedError

    def get(self, kind: str, name: str) -> Dict[str, Any]:
        """
        Return the JSON document ``name`` of one of ``DOCUMENT_KINDS``.
        """
        raise NotImplementedError

    def put(self, kind: str, name: str, document: Dict[str, Any]) -> None:
        """
        Stores a JSON document under the given kind and name.
        """
        raise NotImplementedError
