"""Byte-reproducible binary containers for named arrays.

Same layout as ``np.savez`` (a zip of ``.npy`` members) but with fixed member
timestamps and ordering, so equal inputs give identical bytes.
"""

import io
import json
import zipfile

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        if meta is not None:
            info = zipfile.ZipInfo("__meta__.json", date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, json.dumps(meta, sort_keys=True, separators=(",", ":")))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name], order="C"), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def load_arrays(path) -> tuple[dict, dict | None]:
    arrays = {}
    meta = None
    with zipfile.ZipFile(path) as zf:
        for name in zf.namelist():
            if name == "__meta__.json":
                meta = json.loads(zf.read(name))
            elif name.endswith(".npy"):
                arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    return arrays, meta
