# The MIT License (MIT)
# Copyright © 2026 ticlust developers

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

from pathlib import Path
from typing import Union

import numpy as np
from rich.console import Console
from rich.text import Text

from ticlust.protocol import toeplitz_class_index, toeplitz_projection

CONFIGS = Path(__file__).parent / "configs"


class CLOSE_IN_VALUE:
    value: Union[float, int]
    tolerance: Union[float, int]

    def __init__(
        self,
        value: Union[float, int],
        tolerance: Union[float, int] = 0.0,
    ) -> None:
        self.value = value
        self.tolerance = tolerance

    def __eq__(self, __o: Union[float, int]) -> bool:
        # True if __o \in [value - tolerance, value + tolerance]
        # or if value \in [__o - tolerance, __o + tolerance]
        return (
            (self.value - self.tolerance) <= __o
            and __o <= (self.value + self.tolerance)
        ) or (
            (__o - self.tolerance) <= self.value
            and self.value <= (__o + self.tolerance)
        )

    def __repr__(self) -> str:
        return f"CLOSE_IN_VALUE({self.value} ± {self.tolerance})"


def random_spd(rng: np.random.Generator, d: int, min_eig: float = 0.5) -> np.ndarray:
    """Random symmetric positive definite matrix with eigenvalues >= min_eig."""
    a = rng.standard_normal((d, d))
    q, _ = np.linalg.qr(a)
    eigvals = min_eig + rng.uniform(0.0, 2.0, size=d)
    return (q * eigvals) @ q.T


def random_toeplitz_spd(rng: np.random.Generator, n: int, w: int) -> np.ndarray:
    """Random SPD block-Toeplitz matrix (shared diagonal value dominates every row)."""
    ids = toeplitz_class_index(n, w)
    values = rng.uniform(-1.0, 1.0, size=int(ids.max()) + 1)
    theta = values[ids]
    np.fill_diagonal(theta, 0.0)
    diag = np.abs(theta).sum(axis=1).max() + 1.0
    return theta + diag * np.eye(n * w)


def max_toeplitz_deviation(theta: np.ndarray, n: int, w: int) -> float:
    return float(np.max(np.abs(theta - toeplitz_projection(theta, n, w))))


class MockConsole:
    """
    Mocks the console object for print.
    Captures the last print output as a string.
    """

    captured_print = None

    def print(self, *args, **kwargs):
        console = Console(
            width=1000, no_color=True, markup=False
        )  # set width to 1000 to avoid truncation
        console.begin_capture()
        console.print(*args, **kwargs)
        self.captured_print = console.end_capture()

    @staticmethod
    def remove_rich_syntax(text: str) -> str:
        """
        Removes rich syntax from the given text.
        Removes markup and ansi syntax.
        """
        output_no_syntax = Text.from_ansi(Text.from_markup(text).plain).plain

        return output_no_syntax
