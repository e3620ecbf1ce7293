import io
import json
from pathlib import Path
from typing import Optional, Union

import torch

from config.run_config import ModelConfig
from dataset.preprocess import EncodingLayout
from dataset.schema import DataSchema
from gan.network import GeneratorBundle
from utils.exceptions import CheckpointError
from utils.logger import logger
from utils.retry_mechanism import retry_on_exception

FORMAT_VERSION = 1


def bundle_to_payload(bundle: GeneratorBundle) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_config": bundle.config_json(),
        "layout": json.dumps(bundle.layout.to_dict(), sort_keys=True, ensure_ascii=False),
        "schema_hash": bundle.layout.schema.schema_hash(),
        "seed": bundle.seed,
        "step": bundle.step,
        "rng_state": bundle.rng.get_state(),
        "state_dict": {
            name: module.state_dict() for name, module in bundle.modules().items() if module is not None
        },
    }


def bundle_from_payload(payload: dict, expected_schema: Optional[DataSchema] = None) -> GeneratorBundle:
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version}, expected {FORMAT_VERSION}")
    layout = EncodingLayout.from_dict(json.loads(payload["layout"]))
    if layout.schema.schema_hash() != payload["schema_hash"]:
        raise CheckpointError("checkpoint layout does not match its recorded schema hash")
    if expected_schema is not None and expected_schema.schema_hash() != payload["schema_hash"]:
        raise CheckpointError("checkpoint was trained on a different schema (schema hash mismatch)")
    config = ModelConfig.model_validate(json.loads(payload["model_config"]))
    bundle = GeneratorBundle(layout, config, seed=int(payload["seed"]))
    for name, module in bundle.modules().items():
        if module is not None:
            module.load_state_dict(payload["state_dict"][name])
    bundle.step = int(payload["step"])
    bundle.rng.set_state(payload["rng_state"])
    return bundle


def snapshot_state(bundle: GeneratorBundle) -> bytes:
    """In-memory copy of a bundle, used for rollback"""
    buffer = io.BytesIO()
    torch.save(bundle_to_payload(bundle), buffer)
    return buffer.getvalue()


def restore_state(bundle: GeneratorBundle, snapshot: bytes) -> None:
    payload = torch.load(io.BytesIO(snapshot), weights_only=True)
    for name, module in bundle.modules().items():
        if module is not None:
            module.load_state_dict(payload["state_dict"][name])
    bundle.step = int(payload["step"])
    bundle.rng.set_state(payload["rng_state"])


@retry_on_exception()
def save_checkpoint(bundle: GeneratorBundle, path: Union[str, Path]) -> Path:
    """
    Write a versioned checkpoint: model config and layout as JSON blocks plus parameter tensors

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(bundle_to_payload(bundle), path)
    logger.log_artifact("checkpoint", str(path))
    return path


def load_checkpoint(path: Union[str, Path], expected_schema: Optional[DataSchema] = None) -> GeneratorBundle:
    """
    Load a checkpoint written by save_checkpoint

    Raises:
        CheckpointError: Unreadable file, unknown format version, or schema hash mismatch
    """
    path = Path(path)
    try:
        payload = torch.load(path, weights_only=True)
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict):
        raise CheckpointError(f"{path} is not a checkpoint")
    bundle = bundle_from_payload(payload, expected_schema)
    logger.info(f"✅ Loaded checkpoint {path} (step {bundle.step})")
    return bundle
