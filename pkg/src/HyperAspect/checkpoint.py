"""
Model checkpoints: a zip archive holding one ``.npy`` entry per array and a
``meta.json`` describing the model.

Entries are stored uncompressed with a fixed timestamp, so saving the same
model twice yields byte-identical files.
"""

import io
import json
import zipfile
from pathlib import Path

import numpy as np
from loguru import logger

from .config import TrainConfig
from .corpus import SeedLexicon, Vocabulary
from .exceptions import DataError
from .model import AspectModel, TeacherState

FORMAT_VERSION = 1
ZIP_DATE = (1980, 1, 1, 0, 0, 0)
META_ENTRY = "meta.json"
PARAM_PREFIX = "params/"
TEACHER_ENTRY = "teacher_quality.npy"


def _entry(name):
    info = zipfile.ZipInfo(name, date_time=ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def _array_bytes(array):
    buffer = io.BytesIO()
    np.lib.format.write_array(buffer, np.ascontiguousarray(array), allow_pickle=False)
    return buffer.getvalue()


def save_model(model, path):
    """
    Write ``model`` to ``path``.

    Args:
        model (AspectModel): The model to save
        path (str | Path): Destination file
    """
    meta = {
        "format_version": FORMAT_VERSION,
        "mode": model.mode,
        "config": model.config.to_dict(),
        "aspect_names": list(model.lexicon.aspect_names),
        "general_index": model.lexicon.general_index,
        "seed_words": [list(words) for words in model.lexicon.seed_words],
        "stopwords": sorted(model.stopwords),
        "vocabulary": list(model.vocab.words),
        "params": sorted(model.params),
    }
    path = Path(path)
    with zipfile.ZipFile(path, "w") as archive:
        archive.writestr(
            _entry(META_ENTRY), json.dumps(meta, indent=1, sort_keys=True).encode("utf-8")
        )
        for name in sorted(model.params):
            archive.writestr(
                _entry(f"{PARAM_PREFIX}{name}.npy"), _array_bytes(model.params[name])
            )
        archive.writestr(_entry(TEACHER_ENTRY), _array_bytes(model.teacher.quality))
    logger.debug(f"Saved {model.mode} model to {path}")


def load_model(path):
    """
    Read a model written by :func:`save_model`.

    Raises:
        DataError: If the file is missing, not a checkpoint, or of an
            unsupported format version
    """
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as archive:
            meta = json.loads(archive.read(META_ENTRY).decode("utf-8"))
            version = meta.get("format_version")
            if version != FORMAT_VERSION:
                raise DataError(f"{path}: unsupported checkpoint format {version}")
            params = {
                name: _read_array(archive, f"{PARAM_PREFIX}{name}.npy")
                for name in meta["params"]
            }
            quality = _read_array(archive, TEACHER_ENTRY)
    except (OSError, KeyError, zipfile.BadZipFile, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read checkpoint {path}: {e}") from e

    vocab = Vocabulary(meta["vocabulary"])
    lexicon = SeedLexicon(
        aspect_names=meta["aspect_names"],
        seeds=[[vocab.index(w) for w in words] for words in meta["seed_words"]],
        seed_words=meta["seed_words"],
        general_index=meta["general_index"],
    )
    config = TrainConfig.from_dict(meta["config"])
    logger.debug(f"Loaded {config.mode} model from {path}")
    stopwords = frozenset(meta.get("stopwords", ()))
    return AspectModel(config, vocab, lexicon, params, TeacherState(quality), stopwords)


def _read_array(archive, name):
    return np.lib.format.read_array(io.BytesIO(archive.read(name)), allow_pickle=False)
