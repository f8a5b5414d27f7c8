"""Load one forge fixture the way its framework would and report whether
the canary ran. Usage: load_fixture.py FAMILY PATH SENTINEL

Exit status 0 means the sentinel was printed (or, for gadget fixtures, the
load completed); 2 means a loader dependency is missing. Archive layers from frameworks that are not installed are
opened with the standard library and handed to the loader of the member.
"""
import contextlib
import io
import os
import pickle
import sys
import tarfile
import tempfile
import zipfile


def torch_load(path):
    import torch

    return torch.load(path, weights_only=False)


def joblib_load(path):
    import joblib

    return joblib.load(path)


def pickle_load(path):
    with open(path, "rb") as f:
        return pickle.load(f)


def npz_load(path):
    import numpy as np

    with np.load(path, allow_pickle=True) as z:
        return [z[k] for k in z.files]


def tar_member(path, name, tmp):
    with tarfile.open(path) as t:
        t.extract(name, tmp)
    return os.path.join(tmp, name)


def zip_member(path, name, tmp):
    with zipfile.ZipFile(path) as z:
        return z.extract(name, tmp)


def load(family, path, tmp):
    row = int(family[4:]) if family.startswith("row-") else None
    if family.startswith("gadget-") or family in ("eop-1", "eop-3") or row == 1:
        return pickle_load(path)
    if family.startswith("eop-") or row in (2, 3):
        return torch_load(path)
    if row in range(4, 10):
        return joblib_load(path)
    if row in range(11, 17):
        return joblib_load(tar_member(path, "model.joblib", tmp))
    if row == 10:
        return pickle_load(tar_member(path, "model.pkl", tmp))
    if row == 17:
        return npz_load(zip_member(path, "weights.npz", tmp))
    if row == 18:
        return pickle_load(tar_member(zip_member(path, "model.tar", tmp), "model.pkl", tmp))
    if row in (19, 20, 21, 22):
        return torch_load(tar_member(path, "model_weights.ckpt", tmp))
    raise SystemExit(f"no loader for {family}")


def main():
    family, path, sentinel = sys.argv[1:4]
    if family in ("row-09", "row-16"):
        try:
            import lz4.frame  # noqa: F401
        except ImportError:
            print("skipped: lz4 module not installed")
            sys.exit(2)
    out = io.StringIO()
    error = None
    with tempfile.TemporaryDirectory() as tmp, contextlib.redirect_stdout(out):
        try:
            load(family, path, tmp)
        except Exception as e:  # the canary may run before a later failure
            error = f"{type(e).__name__}: {e}"
    printed = sentinel in out.getvalue()
    print(f"printed={printed} error={error}")
    ok = printed or (family.startswith("gadget-") and error is None)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
