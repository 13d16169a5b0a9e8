import sys
from setuptools import setup, find_packages

if sys.version_info < (3, 8):
    sys.exit("Sorry, Python < 3.8 is not supported")

VERSION = "0.1.0"

test_require = [
    "mock",
    "pytest",
    "dir-content-diff<1.9",
]

setup(
    name="factorlens",
    version=VERSION,
    description="Trace-penalized factor model covariance estimation",
    install_requires=[
        "scipy>=1.2.0",
        "numpy",
        "pandas",
        "tqdm",
        "luigi",
        "pyyaml",
        "cvxpy>=1.2",
    ],
    extras_require={"test": test_require},
    entry_points={"console_scripts": ["factorlens=factorlens.cli:main"]},
    packages=find_packages(exclude=["tests"]),
)
