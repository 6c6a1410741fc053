"""Minimal dense feed-forward inference with swappable activations."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .activations import ActivationSpec, approx_activation_array, reference_array
from .errors import DomainError
from .series import Precision


@dataclass
class DenseLayer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    activation: Optional[ActivationSpec] = None  # None means linear

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise DomainError(
                f"layer weights {self.weights.shape} and bias {self.bias.shape} do not match")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class NetworkModel:
    layers: list[DenseLayer]
    input_dim: int
    num_classes: int

    def __post_init__(self) -> None:
        if not self.layers:
            raise DomainError("model has no layers")
        width = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.fan_in != width:
                raise DomainError(f"layer {i} expects {layer.fan_in} inputs, previous width is {width}")
            width = layer.fan_out
        if width != self.num_classes:
            raise DomainError(f"final width {width} != num_classes {self.num_classes}")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "layers": [
                {
                    "weights": layer.weights.tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation.kind.value if layer.activation else "linear",
                    "params": layer.activation.params() if layer.activation else {},
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "NetworkModel":
        try:
            layers = []
            for entry in doc["layers"]:
                name = entry.get("activation", "linear")
                act = None if name == "linear" else ActivationSpec.from_name(name, entry.get("params"))
                layers.append(DenseLayer(entry["weights"], entry["bias"], act))
            return cls(layers, int(doc["input_dim"]), int(doc["num_classes"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"malformed model document: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "NetworkModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) == 0:
            raise DomainError("dataset is empty")
        if len(self.inputs) != len(self.labels):
            raise DomainError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if np.any(self.labels < 0):
            raise DomainError("labels must be non-negative class indices")

    def __len__(self) -> int:
        return len(self.labels)

    def head(self, size: Optional[int]) -> "Dataset":
        if size is None or size >= len(self):
            return self
        if size < 1:
            raise DomainError(f"subset size must be >= 1, got {size}")
        return Dataset(self.inputs[:size], self.labels[:size])

    def check_compatible(self, model: NetworkModel) -> None:
        if self.inputs.shape[1] != model.input_dim:
            raise DomainError(f"data has {self.inputs.shape[1]} features, model expects {model.input_dim}")
        if np.any(self.labels >= model.num_classes):
            raise DomainError(f"labels exceed num_classes={model.num_classes}")

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        try:
            return cls([[float(v) for v in r[:-1]] for r in rows], [int(r[-1]) for r in rows])
        except ValueError as exc:
            raise DomainError(f"malformed dataset row: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        return cls.from_csv(Path(path).read_text())

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        for x, y in zip(self.inputs, self.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])
        return out.getvalue()


@dataclass
class ApproxModel:
    """View of a model whose selected activations use the series engine.

    ``n_terms`` maps layer index to the series length for that layer; other
    layers keep their exact activation. The wrapped model is not modified.
    """

    model: NetworkModel
    n_terms: dict[int, int] = field(default_factory=dict)
    precision: Precision = Precision.DOUBLE
    literal: bool = False

    def activate(self, index: int, z: np.ndarray) -> np.ndarray:
        spec = self.model.layers[index].activation
        if spec is None:
            return z
        n = self.n_terms.get(index)
        if n is None:
            return reference_array(spec, z)
        out = approx_activation_array(spec, z, n, self.precision, self.literal)
        return out.astype(np.float64)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for i, layer in enumerate(self.model.layers):
            h = self.activate(i, h @ layer.weights + layer.bias)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def accuracy(self, data: Dataset) -> float:
        data.check_compatible(self.model)
        correct = int(np.count_nonzero(self.predict(data.inputs) == data.labels))
        return correct / len(data)


def pre_activations(model: NetworkModel, x: np.ndarray) -> list[np.ndarray]:
    """Exact pre-activation values of every layer, for range and margin audits."""
    view = ApproxModel(model)
    h = np.asarray(x, dtype=np.float64)
    out = []
    for i, layer in enumerate(model.layers):
        z = h @ layer.weights + layer.bias
        out.append(z)
        h = view.activate(i, z)
    return out


def bundled_model() -> NetworkModel:
    """The shipped 2-16-16-16-2 Swish classifier."""
    text = resources.files("tytan.data").joinpath("toy_model.json").read_text()
    return NetworkModel.from_dict(json.loads(text))


def bundled_dataset() -> Dataset:
    """The shipped 400-point, 2-class evaluation set."""
    return Dataset.from_csv(resources.files("tytan.data").joinpath("toy_data.csv").read_text())


def bundled_paths() -> tuple[Path, Path]:
    root = resources.files("tytan.data")
    return Path(str(root.joinpath("toy_model.json"))), Path(str(root.joinpath("toy_data.csv")))


def build_model(widths: Sequence[int], activation: Optional[ActivationSpec],
                rng: np.random.Generator) -> NetworkModel:
    """Randomly initialised model with ``activation`` on every hidden layer."""
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        last = i == len(widths) - 2
        w = rng.normal(0.0, np.sqrt(2.0 / (a + b)), size=(a, b))
        layers.append(DenseLayer(w, np.zeros(b), None if last else activation))
    return NetworkModel(layers, widths[0], widths[-1])
