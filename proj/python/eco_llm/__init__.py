"""Pythonic wrappers over the _eco extension module.

Structured values cross the C++ boundary as JSON strings; this package
decodes them into plain dicts and lists.
"""

import json as _json

import _eco

EcoError = _eco.EcoError

count_paths = _eco.count_paths
enumerate_path_ids = _eco.enumerate_path_ids
estimate_cost = _eco.estimate_cost
embed = _eco.embed
cosine_sim = _eco.cosine_sim
token_f1 = _eco.token_f1
count_tokens = _eco.count_tokens
make_world = _eco.make_world


def build_id(registry):
    """Content-addressed build identifier of a registry document."""
    if isinstance(registry, dict):
        registry = _json.dumps(registry)
    return _eco.build_id(registry)


def resolve_dynamic(registry, environment):
    if isinstance(registry, dict):
        registry = _json.dumps(registry)
    if isinstance(environment, dict):
        environment = _json.dumps(environment)
    return _json.loads(_eco.resolve_dynamic(registry, environment))


def chunk_markdown(doc_id, text):
    return _json.loads(_eco.chunk_markdown(doc_id, text))


class Encoder:
    """Trained query encoder loaded from an encoder.json artifact."""

    def __init__(self, encoder_json_path):
        self._inner = _eco.Encoder(str(encoder_json_path))

    @property
    def prototypes(self):
        return self._inner.prototypes

    def assign(self, text):
        return _json.loads(self._inner.assign(text))


class Bundle:
    """A loaded build: registry, records, encoder, and path statistics."""

    def __init__(self, artifact_dir, build_id):
        self._inner = _eco.Bundle(str(artifact_dir), build_id)

    @property
    def build_id(self):
        return self._inner.build_id

    @property
    def path_count(self):
        return self._inner.path_count

    @property
    def record_count(self):
        return self._inner.record_count

    def select(self, query, max_latency_ms=None, max_cost=None,
               profile="latency_first", k=5):
        return _json.loads(
            self._inner.select(query, max_latency_ms, max_cost, profile, k))


__all__ = [
    "EcoError", "count_paths", "enumerate_path_ids", "build_id",
    "resolve_dynamic", "estimate_cost", "embed", "cosine_sim", "token_f1",
    "count_tokens", "chunk_markdown", "make_world", "Encoder", "Bundle",
]
