"""Adversarial attacks and defenses for transaction-sequence classifiers."""

import json

from ._txadv import (
    ClientSequence,
    Dataset,
    Error,
    MccCatalog,
    Model,
    Transaction,
    build_catalog,
    generate_synthetic,
    harmonic_mean,
    load_dataset,
    load_model,
    roc_auc,
    spearman,
)
from . import _txadv

__all__ = [
    "ClientSequence", "Dataset", "Error", "MccCatalog", "Model", "Transaction", "apply_edits", "attack",
    "build_catalog", "generate_synthetic", "harmonic_mean", "load_dataset", "load_model", "roc_auc", "spearman",
    "train", "violations",
]


def train(kind, dataset, params=None, workers=1):
    """Train a defended model kind; `params` takes the keys of the `model` section of a run config."""
    return _txadv.train(kind, dataset, json.dumps(params or {}), workers)


def attack(kind, models, cohort, catalog, config=None, weights=(), workers=1):
    """Run an attack over `cohort`; returns a dict with `name`, `tau` and one edit list per client.

    `config` takes the keys of the `attack` section of a run config.
    """
    if isinstance(models, Model):
        models = [models]
    out = _txadv._attack(kind, list(models), list(cohort), catalog, json.dumps(config or {}), list(weights), workers)
    return json.loads(out)


def apply_edits(sequence, edit_list):
    return _txadv._apply_edits(sequence, json.dumps(edit_list))


def violations(sequence, edit_list, catalog, max_edits=10, amount_shrink=0.95):
    """Names of the constraint violations of `edit_list`; empty when it is legal."""
    return _txadv._violations(sequence, json.dumps(edit_list), max_edits, amount_shrink, catalog)
