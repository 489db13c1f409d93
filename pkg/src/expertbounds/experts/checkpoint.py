"""Named-array checkpoint files.

Layout::

    expertbounds-checkpoint 1
    array <name> <d1>,<d2>,...
    <values, space separated, 17 significant digits>
    ...
    end

Values round-trip exactly.
"""

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from expertbounds.datatypes.model_types import ExpertModel, RouterParams
from expertbounds.errors import ParseError, StorageError
from expertbounds.numerics.mlp import MlpParams
from expertbounds.synth.storage import fmt_float

CHECKPOINT_HEADER = "expertbounds-checkpoint 1"

NamedArrays = dict[str, NDArray[np.float64]]


def serialize_arrays(arrays: NamedArrays) -> str:
    """Render named arrays in checkpoint layout, in insertion order."""
    lines = [CHECKPOINT_HEADER]
    for name, array in arrays.items():
        if not name or any(c.isspace() for c in name):
            raise StorageError(f"array name '{name}' must be non-empty without whitespace")
        lines.append(f"array {name} {','.join(str(d) for d in array.shape)}")
        lines.append(" ".join(fmt_float(v) for v in np.ravel(array)))
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse_arrays(text: str) -> NamedArrays:
    """Parse checkpoint text.

    Raises:
        ParseError: On a malformed header, shape, value line or missing end marker.
    """
    lines = text.splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ParseError(1, f"expected header '{CHECKPOINT_HEADER}'")
    arrays: NamedArrays = {}
    i = 1
    while i < len(lines):
        line_no = i + 1
        fields = lines[i].split()
        if fields == ["end"]:
            return arrays
        if len(fields) != 3 or fields[0] != "array":
            raise ParseError(line_no, f"expected 'array <name> <shape>', got '{lines[i]}'")
        name = fields[1]
        if name in arrays:
            raise ParseError(line_no, f"duplicate array '{name}'")
        try:
            shape = tuple(int(d) for d in fields[2].split(","))
        except ValueError:
            raise ParseError(line_no, f"bad shape '{fields[2]}'") from None
        if i + 1 >= len(lines):
            raise ParseError(line_no, f"array '{name}' has no value line")
        try:
            values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        except ValueError:
            raise ParseError(line_no + 1, f"non-numeric value in array '{name}'") from None
        if values.size != int(np.prod(shape)):
            raise ParseError(line_no + 1, f"array '{name}' has {values.size} values, shape {shape} needs {np.prod(shape)}")
        arrays[name] = values.reshape(shape)
        i += 2
    raise ParseError(len(lines), "missing 'end' marker")


def write_checkpoint(arrays: NamedArrays, path: Path) -> None:
    """Write a checkpoint file."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_arrays(arrays), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write checkpoint {path}: {e}") from e


def read_checkpoint(path: Path) -> NamedArrays:
    """Read a checkpoint file."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read checkpoint {path}: {e}") from e
    return parse_arrays(text)


def mlp_to_arrays(prefix: str, params: MlpParams) -> NamedArrays:
    """Flatten an MLP into ``<prefix>.w<i>`` / ``<prefix>.b<i>`` (+ ``<prefix>.stream_mix``)."""
    arrays: NamedArrays = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases, strict=True)):
        arrays[f"{prefix}.w{i}"] = w
        arrays[f"{prefix}.b{i}"] = b
    if params.stream_mix is not None:
        arrays[f"{prefix}.stream_mix"] = params.stream_mix
    return arrays


def mlp_from_arrays(prefix: str, arrays: NamedArrays) -> MlpParams:
    """Inverse of :func:`mlp_to_arrays`."""
    weights, biases = [], []
    i = 0
    while f"{prefix}.w{i}" in arrays:
        weights.append(arrays[f"{prefix}.w{i}"])
        if f"{prefix}.b{i}" not in arrays:
            raise StorageError(f"checkpoint lacks bias '{prefix}.b{i}'")
        biases.append(arrays[f"{prefix}.b{i}"])
        i += 1
    if not weights:
        raise StorageError(f"checkpoint holds no network under '{prefix}'")
    return MlpParams(tuple(weights), tuple(biases), "tanh", arrays.get(f"{prefix}.stream_mix"))


def expert_to_arrays(model: ExpertModel) -> NamedArrays:
    """Classifier and embedding of one expert."""
    return mlp_to_arrays("classifier", model.params) | mlp_to_arrays("embedding", model.embed_params)


def expert_from_arrays(domain_id: str, arrays: NamedArrays) -> ExpertModel:
    """Rebuild an expert from :func:`expert_to_arrays` output."""
    return ExpertModel(
        domain_id=domain_id,
        params=mlp_from_arrays("classifier", arrays),
        embed_params=mlp_from_arrays("embedding", arrays),
    )


_ROUTER_SCALARS = ("tau", "lambda_lb", "lambda_boundary", "lambda_coverage", "kernel_sigma")


def router_to_arrays(router: RouterParams) -> NamedArrays:
    """Gate network plus hyperparameters stored as one-element arrays."""
    arrays = mlp_to_arrays("gate", router.gate_net)
    for name in _ROUTER_SCALARS:
        arrays[f"router.{name}"] = np.array([getattr(router, name)])
    arrays["router.k"] = np.array([float(router.k)])
    return arrays


def router_from_arrays(arrays: NamedArrays) -> RouterParams:
    """Inverse of :func:`router_to_arrays`."""
    try:
        scalars = {name: float(arrays[f"router.{name}"][0]) for name in _ROUTER_SCALARS}
        k = int(arrays["router.k"][0])
    except KeyError as e:
        raise StorageError(f"router checkpoint lacks {e}") from e
    return RouterParams(gate_net=mlp_from_arrays("gate", arrays), k=k, **scalars)
