"""Binary columnar draw files.

Layout (little endian)::

    header   magic "FCAMDRW1" | T: u4 | J: u4 | D: u8
    record   scalars (fixed width, SCALAR_FIELDS order)
             Astar: L x f8
             S: u4 byte length + LEB128 varints (J values)
             M: u4 byte length + LEB128 varints (T values)

D is written as 0 on open and patched when the writer closes.
"""
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from fcam.core.exceptions import DrawFileError
from fcam.models.domain import SCALAR_FIELDS, ChainState, DrawStore

logger = logging.getLogger(__name__)

MAGIC = b"FCAMDRW1"
_HEADER_DTYPE = np.dtype([("T", "<u4"), ("J", "<u4"), ("D", "<u8")])
_SCALAR_DTYPE = np.dtype(
    [(name, "<u4" if name in ("K", "Kplus", "L", "Lplus") else "<f8") for name in SCALAR_FIELDS]
)
_LENGTH_DTYPE = np.dtype("<u4")
_D_OFFSET = len(MAGIC) + 8

PathLike = Union[str, Path]


def encode_varints(values: np.ndarray) -> bytes:
    """LEB128-encode a vector of non-negative integers."""
    v = np.asarray(values, dtype=np.uint64)
    if v.size == 0:
        return b""
    n_bytes = np.ones(v.shape, dtype=np.int64)
    for k in range(1, 10):
        n_bytes += (v >> np.uint64(7 * k)) > 0
    offsets = np.cumsum(n_bytes) - n_bytes
    out = np.zeros(int(n_bytes.sum()), dtype=np.uint8)
    for k in range(int(n_bytes.max())):
        present = n_bytes > k
        chunk = (v[present] >> np.uint64(7 * k)) & np.uint64(0x7F)
        more = (n_bytes[present] > k + 1).astype(np.uint64) << np.uint64(7)
        out[offsets[present] + k] = (chunk | more).astype(np.uint8)
    return out.tobytes()


def decode_varints(data: bytes, count: int) -> np.ndarray:
    """Decode exactly ``count`` LEB128 varints from ``data``."""
    b = np.frombuffer(data, dtype=np.uint8)
    if count == 0:
        if b.size:
            raise DrawFileError("unexpected bytes after an empty varint block")
        return np.zeros(0, dtype=np.int64)
    terminal = (b & 0x80) == 0
    ends = np.flatnonzero(terminal)
    if ends.size != count or not terminal[-1]:
        raise DrawFileError(f"varint block holds {ends.size} values, expected {count}")
    starts = np.concatenate(([0], ends[:-1] + 1))
    owner = np.repeat(np.arange(count), ends - starts + 1)
    shift = (np.arange(b.size) - starts[owner]).astype(np.uint64) * np.uint64(7)
    values = np.zeros(count, dtype=np.uint64)
    np.bitwise_or.at(values, owner, (b & 0x7F).astype(np.uint64) << shift)
    return values.astype(np.int64)


class DrawFileWriter:
    """Streaming writer; usable as a draw sink for run_chain."""

    def __init__(self, path: PathLike, T: int, J: int):
        self.path = Path(path)
        self.T = int(T)
        self.J = int(J)
        self.D = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fh = open(self.path, "wb")
        except OSError as e:
            raise OSError(f"cannot write {self.path}: {e}") from e
        self._fh.write(MAGIC)
        self._fh.write(np.array([(self.T, self.J, 0)], dtype=_HEADER_DTYPE).tobytes())

    def __enter__(self) -> "DrawFileWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def __len__(self) -> int:
        return self.D

    def append(self, state: ChainState) -> None:
        self.append_record({name: getattr(state, name) for name in SCALAR_FIELDS}, state.S, state.M, state.Astar)

    def append_record(self, scalars: dict, S: np.ndarray, M: np.ndarray, Astar: np.ndarray) -> None:
        if len(S) != self.J or len(M) != self.T:
            raise DrawFileError(f"record dimensions (J={len(S)}, T={len(M)}) do not match file (J={self.J}, T={self.T})")
        if int(scalars["L"]) != len(Astar):
            raise DrawFileError(f"record has L={scalars['L']} but {len(Astar)} atoms")
        record = np.zeros(1, dtype=_SCALAR_DTYPE)
        for name in SCALAR_FIELDS:
            record[name] = scalars[name]
        s_bytes = encode_varints(S)
        m_bytes = encode_varints(M)
        fh = self._fh
        fh.write(record.tobytes())
        fh.write(np.asarray(Astar, dtype="<f8").tobytes())
        fh.write(np.array([len(s_bytes)], dtype=_LENGTH_DTYPE).tobytes())
        fh.write(s_bytes)
        fh.write(np.array([len(m_bytes)], dtype=_LENGTH_DTYPE).tobytes())
        fh.write(m_bytes)
        self.D += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(_D_OFFSET)
        self._fh.write(np.array([self.D], dtype="<u8").tobytes())
        self._fh.close()
        logger.debug("wrote %d draws to %s", self.D, self.path)


def write_draw_file(path: PathLike, store: DrawStore) -> Path:
    """Write a whole DrawStore to ``path``."""
    with DrawFileWriter(path, store.T, store.J) as writer:
        for d in range(store.D):
            writer.append_record(
                {name: store.scalars[name][d] for name in SCALAR_FIELDS}, store.S[d], store.M[d], store.Astar[d]
            )
    return Path(path)


class _Cursor:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DrawFileError(f"{self.path}: truncated draw file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def read_draw_file(path: PathLike) -> DrawStore:
    """Read a draw file into a DrawStore.

    Raises:
        DrawFileError: on a bad magic, truncation or inconsistent record.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DrawFileError(f"cannot read {path}: {e}") from e
    cursor = _Cursor(data, path)
    if cursor.take(len(MAGIC)) != MAGIC:
        raise DrawFileError(f"{path}: not a draw file")
    header = np.frombuffer(cursor.take(_HEADER_DTYPE.itemsize), dtype=_HEADER_DTYPE)[0]
    T, J, D = int(header["T"]), int(header["J"]), int(header["D"])
    store = DrawStore(T=T, J=J)
    for _ in range(D):
        record = np.frombuffer(cursor.take(_SCALAR_DTYPE.itemsize), dtype=_SCALAR_DTYPE)[0]
        scalars = {name: record[name].item() for name in SCALAR_FIELDS}
        L = int(scalars["L"])
        Astar = np.frombuffer(cursor.take(8 * L), dtype="<f8")
        s_len = int(np.frombuffer(cursor.take(4), dtype=_LENGTH_DTYPE)[0])
        S = decode_varints(cursor.take(s_len), J)
        m_len = int(np.frombuffer(cursor.take(4), dtype=_LENGTH_DTYPE)[0])
        M = decode_varints(cursor.take(m_len), T)
        if S.size and S.max() >= int(scalars["K"]) or M.size and M.max() >= L:
            raise DrawFileError(f"{path}: allocation label out of range")
        store.append_record(scalars, S=S, M=M, Astar=Astar)
    if cursor.pos != len(data):
        raise DrawFileError(f"{path}: {len(data) - cursor.pos} trailing bytes after {D} draws")
    return store


def find_draw_files(directory: PathLike, suffix: str = ".fcd") -> List[Path]:
    return sorted(Path(directory).glob(f"*{suffix}"))


def load_draw_dir(directory: PathLike, suffix: str = ".fcd", expected_T: Optional[int] = None) -> DrawStore:
    """Read and pool every draw file in ``directory``.

    Raises:
        DrawFileError: if no draws are found or the files disagree on T or J.
    """
    files = find_draw_files(directory, suffix)
    if not files:
        raise DrawFileError(f"no draws found in {directory}")
    pooled: Optional[DrawStore] = None
    for path in files:
        store = read_draw_file(path)
        if pooled is None:
            pooled = store
        elif (store.T, store.J) != (pooled.T, pooled.J):
            raise DrawFileError(
                f"inconsistent draw files: {files[0].name} has T={pooled.T}, J={pooled.J} "
                f"but {path.name} has T={store.T}, J={store.J}"
            )
        else:
            pooled.extend(store)
    if pooled.D == 0:
        raise DrawFileError(f"no draws found in {directory}")
    if expected_T is not None and pooled.T != expected_T:
        raise DrawFileError(f"draws have T={pooled.T} but the trace has T={expected_T}")
    logger.info("loaded %d draws from %d file(s) in %s", pooled.D, len(files), directory)
    return pooled
