from glob import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "fednorm._core",
    sorted(glob("src/*.cpp")) + ["python/bindings.cpp"],
    include_dirs=["include"],
    cxx_std=20,
    extra_compile_args=["-O3"],
)

setup(
    packages=["fednorm"],
    package_dir={"": "python"},
    ext_modules=[ext],
    cmdclass={"build_ext": build_ext},
)
