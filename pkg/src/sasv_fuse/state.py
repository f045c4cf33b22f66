import json
import threading
from pathlib import Path
from typing import Any, Dict, List, Mapping, Union

from . import __version__

# Run manifest shared by the modules of one process. Codec invocations append
# their command lines here; every command that writes outputs saves it beside
# them with write_manifest.
manifest: Dict[str, Any] = {"codec_commands": []}

_lock = threading.Lock()


def reset_manifest() -> None:
    with _lock:
        manifest.clear()
        manifest["codec_commands"] = []


def record_command(argv: List[str]) -> None:
    """Append one external command line to the manifest."""
    with _lock:
        manifest["codec_commands"].append(list(argv))


def snapshot() -> Dict[str, Any]:
    with _lock:
        return {
            "codec_commands": [list(cmd) for cmd in manifest["codec_commands"]]
        }


def write_manifest(path: Union[str, Path], fields: Mapping[str, Any]) -> None:
    """Save ``fields`` with the version and recorded codec commands as JSON."""
    document = dict(fields)
    document["version"] = __version__
    document["codec_commands"] = snapshot()["codec_commands"]
    Path(path).write_text(
        json.dumps(document, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
        newline="\n",
    )
