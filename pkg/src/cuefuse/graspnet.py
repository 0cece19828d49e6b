"""Gesture-object compatibility network.

Dual-branch MLP: a hand encoder over 63 wrist-relative joint coordinates
and an object encoder over a 1024-d BPS vector, fused by a small head
into a single compatibility probability. Trained with binary cross
entropy; see `training` for the loop and `bps` for the object encoding.

Model files are binary, little-endian: magic ``GNET``, a format version,
the basis seed and BPS scale the model was trained with, then per-array
shape headers and row-major float64 payloads, closed by a CRC32.
"""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bps import BasisPointSet, bps_encode
from .errors import CorruptFile, NonFiniteActivation, ShapeMismatch, VersionMismatch
from .fusion import LikelihoodVector
from .geometry import HandPose, NormalizedHand, Scene, to_canonical_cloud, to_canonical_hand
from .nn import Adam, BatchNorm, Dense, Dropout, Param, ReLU, Sequential, Sigmoid, bce_batch

MAGIC = b"GNET"
FORMAT_VERSION = 1
PROB_CLIP = 1e-15  # keeps outputs strictly inside (0, 1) even when saturated


class Condition(enum.Enum):
    IN_REACH = "in_reach"
    OUT_OF_REACH = "out_of_reach"


@dataclass(frozen=True, eq=False)
class LabeledPair:
    """One training sample: normalized hand, BPS-encoded object, label."""

    hand: NormalizedHand
    object_bps: np.ndarray
    label: float
    subject_id: str = ""
    object_id: str = ""
    condition: Condition = Condition.OUT_OF_REACH

    def __post_init__(self):
        if not 0.0 <= self.label <= 1.0:
            raise ValueError("label must lie in [0, 1]")
        bps = np.asarray(self.object_bps, dtype=np.float64)
        if bps.ndim != 1:
            raise ValueError("object_bps must be 1-D")
        object.__setattr__(self, "object_bps", bps)


@dataclass(frozen=True)
class GraspNetDims:
    """Layer widths. Defaults are the deployed architecture; tests shrink them."""

    hand_in: int = 63
    hand_hidden: int = 256
    obj_in: int = 1024
    obj_hidden1: int = 512
    obj_hidden2: int = 256
    fuse_hidden1: int = 128
    fuse_hidden2: int = 64
    dropout: float = 0.2

    @property
    def fuse_in(self) -> int:
        return self.hand_hidden + self.obj_hidden2


class GraspNet:
    """Dual-branch compatibility model; infer mode is pure and shareable."""

    def __init__(self, seed: int = 0, dims: GraspNetDims | None = None):
        d = dims or GraspNetDims()
        rng = np.random.default_rng(seed)
        self.dims = d
        self.init_seed = int(seed)
        self.basis_seed = 0
        self.bps_scale = 1.0
        p = d.dropout
        self.hand = Sequential(
            [
                Dense(d.hand_in, d.hand_hidden, rng),
                BatchNorm(d.hand_hidden),
                ReLU(),
                Dropout(p),
                Dense(d.hand_hidden, d.hand_hidden, rng),
                BatchNorm(d.hand_hidden),
                ReLU(),
            ]
        )
        self.obj = Sequential(
            [
                Dense(d.obj_in, d.obj_hidden1, rng),
                BatchNorm(d.obj_hidden1),
                ReLU(),
                Dropout(p),
                Dense(d.obj_hidden1, d.obj_hidden2, rng),
                BatchNorm(d.obj_hidden2),
                ReLU(),
                Dropout(p),
            ]
        )
        self.fusion = Sequential(
            [
                Dense(d.fuse_in, d.fuse_hidden1, rng),
                BatchNorm(d.fuse_hidden1),
                ReLU(),
                Dropout(p),
                Dense(d.fuse_hidden1, d.fuse_hidden2, rng),
                BatchNorm(d.fuse_hidden2),
                ReLU(),
                Dropout(p),
                Dense(d.fuse_hidden2, 1, rng),
                Sigmoid(),
            ]
        )
        self._branches = [("hand", self.hand), ("obj", self.obj), ("fusion", self.fusion)]

    # -- forward / backward ------------------------------------------------

    def forward(
        self,
        hand_x: np.ndarray,
        obj_x: np.ndarray,
        *,
        bn_train: bool = False,
        dropout_rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Compatibility probabilities for a batch, shape (B,)."""
        hand_x = np.atleast_2d(np.asarray(hand_x, dtype=np.float64))
        obj_x = np.atleast_2d(np.asarray(obj_x, dtype=np.float64))
        if hand_x.shape[0] != obj_x.shape[0]:
            raise ShapeMismatch("hand and object batches differ in size")
        h = self.hand.forward(hand_x, bn_train, dropout_rng)
        o = self.obj.forward(obj_x, bn_train, dropout_rng)
        z = np.concatenate([h, o], axis=1)
        out = self.fusion.forward(z, bn_train, dropout_rng)[:, 0]
        if not np.all(np.isfinite(out)):
            raise NonFiniteActivation("forward pass produced non-finite output")
        return np.clip(out, PROB_CLIP, 1.0 - PROB_CLIP)

    def backward(self, dprob: np.ndarray) -> None:
        """Accumulate parameter gradients given dLoss/dprobability."""
        grad = np.asarray(dprob, dtype=np.float64).reshape(-1, 1)
        dz = self.fusion.backward(grad)
        split = self.dims.hand_hidden
        self.hand.backward(dz[:, :split])
        self.obj.backward(dz[:, split:])

    def infer(self, hand_x: np.ndarray, obj_x: np.ndarray) -> np.ndarray:
        """Deterministic inference: running BN stats, no dropout."""
        return self.forward(hand_x, obj_x, bn_train=False, dropout_rng=None)

    # -- parameter access ----------------------------------------------------

    def named_params(self) -> list[tuple[str, Param]]:
        out = []
        for branch_name, seq in self._branches:
            for i, layer in enumerate(seq.layers):
                for p in layer.params():
                    out.append((f"{branch_name}.{i}.{p.name}", p))
        return out

    def params(self) -> list[Param]:
        return [p for _, p in self.named_params()]

    def named_state(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for branch_name, seq in self._branches:
            for i, layer in enumerate(seq.layers):
                for name, arr in layer.state():
                    out.append((f"{branch_name}.{i}.{name}", arr))
        return out

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad[...] = 0.0


def gesture_likelihoods(
    net: GraspNet,
    hand: HandPose,
    scene: Scene,
    basis: BasisPointSet,
    *,
    encodings: np.ndarray | None = None,
) -> LikelihoodVector:
    """One compatibility probability per scene object.

    The hand is re-expressed in each instance's canonical frame and the
    instance cloud is BPS-encoded at the model's stored scale; pass
    `encodings` to reuse per-scene encodings across repeated calls.
    """
    if encodings is None:
        encodings = scene_encodings(scene, basis, net.bps_scale)
    hands = np.stack(
        [to_canonical_hand(hand, inst).coords for inst in scene.objects]
    )
    probs = net.infer(hands, encodings)
    return LikelihoodVector(cue_name="gesture", values=probs)


def scene_encodings(scene: Scene, basis: BasisPointSet, scale: float) -> np.ndarray:
    """BPS encodings of every scene instance at its posed yaw, shape (K, |basis|)."""
    return np.stack(
        [bps_encode(to_canonical_cloud(inst), basis, scale) for inst in scene.objects]
    )


def uniform_gesture_likelihoods(n: int) -> LikelihoodVector:
    """The null-gesture contract: a flat vector that cancels in fusion."""
    return LikelihoodVector(cue_name="gesture", values=np.ones(n))


# -- gradient checking -------------------------------------------------------


def grad_check(
    net: GraspNet,
    sample: LabeledPair | list[LabeledPair],
    epsilon: float = 1e-5,
    n_params: int = 100,
    rng: np.random.Generator | None = None,
    corrupt_param: str | None = None,
) -> float:
    """Max relative error between backprop and central finite differences.

    Runs with dropout disabled and batch norm in training mode over the
    given batch (a single sample by default). Relative error uses
    ``|a - n| / max(|a|, |n|, 1e-6)`` so near-zero pairs compare cleanly.
    `corrupt_param` flips the sign of one parameter's analytic gradient;
    it exists to prove the check catches a broken backward pass.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    samples = [sample] if isinstance(sample, LabeledPair) else list(sample)
    hand_x = np.stack([s.hand.coords for s in samples])
    obj_x = np.stack([s.object_bps for s in samples])
    labels = np.array([s.label for s in samples])
    rng = rng or np.random.default_rng(0)

    saved_state = [(name, arr.copy()) for name, arr in net.named_state()]

    def run_loss() -> float:
        preds = net.forward(hand_x, obj_x, bn_train=True, dropout_rng=None)
        loss, _ = bce_batch(preds, labels)
        return loss

    net.zero_grad()
    preds = net.forward(hand_x, obj_x, bn_train=True, dropout_rng=None)
    _, dpred = bce_batch(preds, labels)
    net.backward(dpred)
    analytic = {name: p.grad.copy() for name, p in net.named_params()}
    if corrupt_param is not None:
        if corrupt_param not in analytic:
            raise ValueError(f"unknown parameter {corrupt_param!r}")
        analytic[corrupt_param] = -analytic[corrupt_param]

    named = net.named_params()
    flat_index = [
        (name, p, i) for name, p in named for i in range(p.value.size)
    ]
    if corrupt_param is not None:
        targeted = [t for t in flat_index if t[0] == corrupt_param]
        take = min(20, len(targeted))
        picked = [targeted[i] for i in rng.choice(len(targeted), size=take, replace=False)]
    else:
        picked = []
    remaining = max(0, n_params - len(picked))
    if remaining >= len(flat_index):
        picked += flat_index
    else:
        idx = rng.choice(len(flat_index), size=remaining, replace=False)
        picked += [flat_index[i] for i in idx]

    max_err = 0.0
    for name, p, i in picked:
        flat = p.value.reshape(-1)
        orig = flat[i]
        flat[i] = orig + epsilon
        loss_plus = run_loss()
        flat[i] = orig - epsilon
        loss_minus = run_loss()
        flat[i] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        a = analytic[name].reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        max_err = max(max_err, err)

    # forward passes in train mode drift the running stats; put them back
    state = dict(net.named_state())
    for name, arr in saved_state:
        state[name][...] = arr
    return max_err


# -- serialization -------------------------------------------------------------


def _serial_entries(net: GraspNet) -> list[tuple[str, np.ndarray]]:
    entries = [(name, p.value) for name, p in net.named_params()]
    entries += [(name, arr) for name, arr in net.named_state()]
    return entries


def save_model(net: GraspNet, path) -> None:
    """Write the model file; the round trip is bit-exact."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", FORMAT_VERSION)
    buf += struct.pack("<Q", net.basis_seed)
    buf += struct.pack("<d", net.bps_scale)
    entries = _serial_entries(net)
    buf += struct.pack("<I", len(entries))
    for name, arr in entries:
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            buf += struct.pack("<I", dim)
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFile("model file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path) -> GraspNet:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise CorruptFile("not a model file (bad magic)")
    if zlib.crc32(data[:-4]) != struct.unpack("<I", data[-4:])[0]:
        raise CorruptFile("checksum mismatch")
    r = _Reader(data[:-4])
    r.take(4)  # magic
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version} unsupported (expect {FORMAT_VERSION})")
    (basis_seed,) = r.unpack("<Q")
    (bps_scale,) = r.unpack("<d")
    (n_entries,) = r.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = tuple(r.unpack(f"<{ndim}I")) if ndim else ()
        count = int(np.prod(shape)) if shape else 1
        payload = r.take(8 * count)
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    try:
        dims = GraspNetDims(
            hand_in=arrays["hand.0.w"].shape[0],
            hand_hidden=arrays["hand.0.w"].shape[1],
            obj_in=arrays["obj.0.w"].shape[0],
            obj_hidden1=arrays["obj.0.w"].shape[1],
            obj_hidden2=arrays["obj.4.w"].shape[1],
            fuse_hidden1=arrays["fusion.0.w"].shape[1],
            fuse_hidden2=arrays["fusion.4.w"].shape[1],
        )
    except KeyError as exc:
        raise CorruptFile(f"model file is missing array {exc}") from exc
    net = GraspNet(seed=0, dims=dims)
    net.basis_seed = int(basis_seed)
    net.bps_scale = float(bps_scale)
    for name, p in net.named_params():
        if name not in arrays:
            raise CorruptFile(f"model file is missing parameter {name!r}")
        if arrays[name].shape != p.value.shape:
            raise CorruptFile(f"parameter {name!r} has wrong shape")
        p.value[...] = arrays[name]
    state = dict(net.named_state())
    for name, arr in state.items():
        if name not in arrays:
            raise CorruptFile(f"model file is missing statistics {name!r}")
        arr[...] = arrays[name]
    return net
