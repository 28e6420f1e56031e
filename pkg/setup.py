from setuptools import setup
from src.version import VERSION

setup(
    name="ecs-metrology",
    version=VERSION,
    package_dir={"": "src"},
    py_modules=[
        "boundstate",
        "config_utils",
        "dynamics",
        "fockstate",
        "qfi",
        "spectral",
        "sweeps",
        "version",
    ],
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.7",
        "packaging",  # dependency version checks
    ],
    entry_points={
        "console_scripts": ["ecs-metrology=sweeps:main"],
    },
    description="Non-Markovian entangled-coherent-state metrology: bound states, dynamics and quantum Fisher information",
    keywords="quantum metrology, non-Markovian, bound state, quantum Fisher information, entangled coherent state",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    python_requires=">=3.8",
)
