"""On-disk layout for precomputed features.

::

    <embeddings_dir>/<video_id>.emb        frame features (T x D)
    <embeddings_dir>/text/<key>.emb        token features of one text (N x D)

``key`` is a hash of the whitespace-normalised text, so the original query and
each boundary description are looked up by content. A record's
``embeddings_path`` (relative to the annotations file) overrides the default
frame-feature location.
"""

import hashlib
from pathlib import Path

from .data import ExpandedQuery, VideoRecord, load_embeddings, save_embeddings
from .supervision import QueryFeatures


def text_key(text: str) -> str:
    return hashlib.sha1(" ".join(text.split()).encode("utf-8")).hexdigest()[:20]


class FeatureStore:
    def __init__(self, embeddings_dir, annotations_dir=None):
        self.root = Path(embeddings_dir)
        self.annotations_dir = Path(annotations_dir) if annotations_dir is not None else self.root

    def video_path(self, record: VideoRecord) -> Path:
        if record.embeddings_path:
            return self.annotations_dir / record.embeddings_path
        return self.root / f"{record.video_id}.emb"

    def text_path(self, text: str) -> Path:
        return self.root / "text" / f"{text_key(text)}.emb"

    def load_video(self, record: VideoRecord):
        path = self.video_path(record)
        if not path.is_file():
            raise FileNotFoundError(f"{record.video_id}: no frame features at {path}")
        return load_embeddings(path)

    def load_text(self, text: str):
        path = self.text_path(text)
        if not path.is_file():
            raise FileNotFoundError(f"no token features for {text!r} at {path}")
        return load_embeddings(path)

    def load_query(self, expanded: ExpandedQuery) -> QueryFeatures:
        return QueryFeatures(
            original=self.load_text(expanded.original),
            start=self.load_text(expanded.start_desc),
            end=self.load_text(expanded.end_desc),
        )

    def save_video(self, video_id: str, matrix) -> Path:
        path = self.root / f"{video_id}.emb"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_embeddings(matrix, path)
        return path

    def save_text(self, text: str, matrix) -> Path:
        path = self.text_path(text)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_embeddings(matrix, path)
        return path
