"""
Binary checkpoint of a network's flat parameter vector.

Layout (all little-endian):

    4 bytes   magic b"EAGL"
    uint32    format version
    uint32    number of layers L
    uint32    L + 1 layer widths
    uint8     L activation codes (0 = relu, 1 = identity)
    uint64    parameter count P
    float64   P parameters in flatten() order
"""

import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from core.net import Activation, LayerSpec, Network, flatten, unflatten, init_network
from utils.run_guard import CheckpointError


logger = logging.getLogger(__name__)

MAGIC = b"EAGL"
VERSION = 1

_ACTIVATION_CODES = {Activation.RELU: 0, Activation.IDENTITY: 1}
_CODE_ACTIVATIONS = {code: act for act, code in _ACTIVATION_CODES.items()}


def encode(net: Network) -> bytes:
    dims = [net.layers[0].in_dim] + [spec.out_dim for spec in net.layers]
    params = flatten(net)
    return b"".join([
        MAGIC,
        np.array([VERSION, len(net.layers)], dtype='<u4').tobytes(),
        np.array(dims, dtype='<u4').tobytes(),
        np.array([_ACTIVATION_CODES[spec.activation] for spec in net.layers], dtype='u1').tobytes(),
        np.array([len(params)], dtype='<u8').tobytes(),
        params.astype('<f8').tobytes()
    ])


def decode(payload: bytes) -> Tuple[List[LayerSpec], np.ndarray]:
    """Parse a checkpoint into (layer specs, flat parameters)"""
    if payload[:4] != MAGIC:
        raise CheckpointError("not an EAGL checkpoint (bad magic bytes)")

    try:
        offset = 4
        version, n_layers = np.frombuffer(payload, dtype='<u4', count=2, offset=offset)
        offset += 8
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")

        dims = np.frombuffer(payload, dtype='<u4', count=n_layers + 1, offset=offset)
        offset += 4 * (n_layers + 1)
        codes = np.frombuffer(payload, dtype='u1', count=n_layers, offset=offset)
        offset += n_layers
        (n_params,) = np.frombuffer(payload, dtype='<u8', count=1, offset=offset)
        offset += 8
        params = np.frombuffer(payload, dtype='<f8', count=int(n_params), offset=offset).astype(np.float64)
        offset += 8 * int(n_params)
    except ValueError as e:
        raise CheckpointError(f"truncated checkpoint: {e}") from e

    if offset != len(payload):
        raise CheckpointError(f"checkpoint has {len(payload) - offset} trailing bytes")

    try:
        layers = [
            LayerSpec(int(dims[k]), int(dims[k + 1]), _CODE_ACTIVATIONS[int(codes[k])])
            for k in range(int(n_layers))
        ]
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"invalid layer header: {e}") from e

    expected = sum(spec.n_params for spec in layers)
    if expected != len(params):
        raise CheckpointError(f"header declares {expected} parameters but file holds {len(params)}")

    return layers, params


def save_checkpoint(net: Network, path: Union[str, Path]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(net))
    logger.info(f"Checkpoint saved: {path}")
    return str(path)


def load_checkpoint(path: Union[str, Path]) -> Network:
    """Rebuild a network from a checkpoint file"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")

    layers, params = decode(path.read_bytes())
    net = init_network(layers, seed=0)
    unflatten(net, params)
    return net


def load_into(net: Network, path: Union[str, Path]) -> Network:
    """Load parameters into `net` after checking the layer dims match"""
    loaded = load_checkpoint(path)
    if [(s.in_dim, s.out_dim, s.activation) for s in loaded.layers] != \
            [(s.in_dim, s.out_dim, s.activation) for s in net.layers]:
        raise CheckpointError(
            f"checkpoint layers {[(s.in_dim, s.out_dim) for s in loaded.layers]} "
            f"do not match network {[(s.in_dim, s.out_dim) for s in net.layers]}"
        )
    unflatten(net, flatten(loaded))
    return net
