import subprocess
import sys
from pathlib import Path

from pybind11.setup_helpers import ParallelCompile, Pybind11Extension, build_ext
from setuptools import setup

ROOT = Path(__file__).parent


def eigen_include() -> str:
    try:
        out = subprocess.run(
            ["pkg-config", "--cflags-only-I", "eigen3"],
            capture_output=True, text=True, check=True,
        ).stdout.strip()
        for flag in out.split():
            if flag.startswith("-I"):
                return flag[2:]
    except (OSError, subprocess.CalledProcessError):
        pass
    return "/usr/include/eigen3"


# setuptools requires /-separated paths relative to this file.
sources = sorted(p.relative_to(ROOT).as_posix() for p in (ROOT / "src").glob("*.cpp"))
sources.append("python/bindings.cpp")

ext = Pybind11Extension(
    "mtt._core",
    sources,
    include_dirs=["include", "vendor", eigen_include()],
    libraries=["png", "z"],
    cxx_std=20,
)

ParallelCompile("MTT_BUILD_JOBS", default=0).install()

setup(
    ext_modules=[ext],
    cmdclass={"build_ext": build_ext},
)
