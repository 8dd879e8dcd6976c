import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

setup(
    ext_modules=cythonize(
        [Extension("hacsim.sim._kernel", ["src/hacsim/sim/_kernel.pyx"],
                   include_dirs=[np.get_include()], extra_compile_args=["-O2"])],
        compiler_directives={"language_level": "3"},
    ),
)
