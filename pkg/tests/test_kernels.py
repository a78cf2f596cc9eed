import os
import subprocess
import sys

from hypothesis import given, settings
from hypothesis import strategies as st

from support import lev_oracle
from wedas import kernels


def test_compiled_kernel_is_active():
    # the package is installed with the extension built; a silent fallback would hide a build break
    assert kernels.levenshtein_ext is not None
    assert kernels.BACKEND == "cython"


def test_pure_python_override():
    code = "import wedas.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, WEDAS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_known_distances():
    for fn in (kernels.levenshtein_py, kernels.levenshtein):
        assert fn("kitten", "sitting") == 3
        assert fn("", "abc") == 3
        assert fn("flaw", "lawn") == 2
        assert fn("ça", "ca") == 1
        assert fn("😀a", "a😀") == 2


@settings(max_examples=500, deadline=None)
@given(st.text(max_size=50), st.text(max_size=50))
def test_kernels_agree_with_oracle(a, b):
    expected = lev_oracle(a, b)
    assert kernels.levenshtein_py(a, b) == expected
    assert kernels.levenshtein(a, b) == expected
