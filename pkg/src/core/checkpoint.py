"""
Network checkpoints in safetensors format.

Each network is one file: tensors `layers.<i>.weight` (row-major, out x in)
and `layers.<i>.bias`, little-endian, with the layer sizes stored as a JSON
list under the `sizes` metadata key.
"""

import json
import os
from typing import Dict, Optional

import torch
from safetensors import safe_open
from safetensors.torch import save_file

from ..models.mlp import Mlp
from ..utils.constants import ACTOR_CHECKPOINT, CRITIC_CHECKPOINT
from ..utils.debug import Debug


def save_network(net: Mlp, path: str, metadata: Optional[Dict[str, str]] = None) -> None:
    state = {name: tensor.detach().cpu().contiguous() for name, tensor in net.state_dict().items()}
    header = {"sizes": json.dumps(net.sizes)}
    header.update({k: str(v) for k, v in (metadata or {}).items()})
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_file(state, path, metadata=header)


def load_network(path: str, expected_sizes: Optional[list] = None) -> Mlp:
    """
    Rebuild an Mlp from a checkpoint.

    Raises:
        ValueError: missing size metadata, or sizes differing from expected_sizes
    """
    with safe_open(path, framework="pt", device="cpu") as f:
        metadata = f.metadata() or {}
        if "sizes" not in metadata:
            raise ValueError(f"{path}: checkpoint has no 'sizes' metadata")
        sizes = json.loads(metadata["sizes"])
        state = {key: f.get_tensor(key) for key in f.keys()}

    if expected_sizes is not None and list(expected_sizes) != list(sizes):
        raise ValueError(f"{path}: shape mismatch, checkpoint layers {sizes} but configuration needs {list(expected_sizes)}")
    net = Mlp(sizes).to(next(iter(state.values())).dtype)
    net.load_state_dict(state)
    return net


def save_learner(learner, directory: str, metadata: Optional[Dict[str, str]] = None, debug: Optional[Debug] = None) -> None:
    save_network(learner.actor, os.path.join(directory, ACTOR_CHECKPOINT), metadata)
    save_network(learner.critic, os.path.join(directory, CRITIC_CHECKPOINT), metadata)
    if debug:
        debug.log(f"Saved checkpoints to {directory}", category="file")


def load_learner_weights(learner, directory: str) -> None:
    """Copy checkpointed weights into an existing learner of matching shape."""
    actor = load_network(os.path.join(directory, ACTOR_CHECKPOINT), learner.actor.sizes)
    critic = load_network(os.path.join(directory, CRITIC_CHECKPOINT), learner.critic.sizes)
    with torch.no_grad():
        learner.actor.load_state_dict(actor.state_dict())
        learner.critic.load_state_dict(critic.state_dict())
