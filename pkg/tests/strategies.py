"""Hypothesis strategies shared by the test modules."""
from fractions import Fraction

from hypothesis import strategies as st

from progeq.game_core import MixedStrategy, NormalFormGame


@st.composite
def games(draw, n_players=st.integers(2, 3), sizes=st.integers(1, 3), values=st.integers(-5, 9)):
    n = draw(n_players)
    dims = [draw(sizes) for _ in range(n)]
    labels = [tuple(f"a{k}" for k in range(s)) for s in dims]
    return NormalFormGame.from_function(labels, lambda prof: tuple(draw(values) for _ in range(n)))


@st.composite
def mixed(draw, size: int, denom: int = 12):
    raw = draw(st.lists(st.integers(0, denom), min_size=size, max_size=size).filter(lambda w: sum(w) > 0))
    total = sum(raw)
    return MixedStrategy(tuple(Fraction(w, total) for w in raw))


@st.composite
def profiles(draw, game):
    return [draw(mixed(s)) for s in game.sizes]
