"""Token vocabulary shared by training, sampling and checkpoints."""

from __future__ import annotations

from dataclasses import dataclass

from ..expr import PrimitiveSet

PAD, BOS, EOS = 0, 1, 2


@dataclass(frozen=True)
class Vocabulary:
    """Bijective symbol<->id map: PAD, BOS, EOS, operators, variables, constants."""

    symbols: tuple

    @classmethod
    def from_primitives(cls, prims: PrimitiveSet) -> "Vocabulary":
        return cls(symbols=("<pad>", "<bos>", "<eos>")
                   + tuple(prims.operators) + prims.variables + prims.constants)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def id_of(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise KeyError(f"symbol {symbol!r} not in vocabulary") from None

    def encode(self, tokens) -> list:
        index = {s: i for i, s in enumerate(self.symbols)}
        return [index[t] for t in tokens]

    def decode(self, ids) -> list:
        return [self.symbols[i] for i in ids]

    def to_json(self) -> list:
        return list(self.symbols)

    @classmethod
    def from_json(cls, obj) -> "Vocabulary":
        return cls(symbols=tuple(obj))
