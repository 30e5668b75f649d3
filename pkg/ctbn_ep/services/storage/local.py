# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import json
import os
from typing import Any, Dict, List

from ctbn_ep.interfaces import DOCUMENT_KINDS, IStorage, ServiceSettings


class StorageError(Exception):
    pass


class LocalStorage(IStorage):
    def __init__(self, path: str) -> None:
        self._path: str = path

    @classmethod
    def configure(cls, settings) -> None:
        os.makedirs(settings.LOCAL_STORAGE_BACKEND_PATH, exist_ok=True)

    @classmethod
    def settings(cls) -> List[ServiceSettings]:
        return [
            ServiceSettings(
                name="LOCAL_STORAGE_BACKEND_PATH",
                argument="path",
                required=True,
            ),
        ]

    def _filename(self, kind: str, name: str) -> str:
        if kind not in DOCUMENT_KINDS:
            raise StorageError(f"Unknown document kind {kind}")
        if os.sep in name or name.startswith("."):
            raise StorageError(f"Invalid document name '{name}'")

        return os.path.join(self._path, kind, f"{name}.json")

    def get(self, kind: str, name: str) -> Dict[str, Any]:
        """
        Reads ``<path>/<kind>/<name>.json`` from the configured path.
        """
        filename = self._filename(kind, name)
        try:
            with open(filename, "r") as file_object:
                return json.load(file_object)
        except OSError:
            raise StorageError(f"Can't open {kind} '{name}'")
        except json.JSONDecodeError as err:
            raise StorageError(f"{kind} '{name}' is not valid JSON: {err}")

    def put(self, kind: str, name: str, document: Dict[str, Any]) -> None:
        """
        Writes a JSON document to ``<path>/<kind>/<name>.json``.
        """
        filename = self._filename(kind, name)
        try:
            os.makedirs(os.path.dirname(filename), exist_ok=True)
            with open(filename, "w") as destination_file:
                json.dump(document, destination_file, indent=2)
                destination_file.flush()
                os.fsync(destination_file.fileno())
        except OSError:
            raise StorageError(f"Can't write {kind} file '{name}'")
