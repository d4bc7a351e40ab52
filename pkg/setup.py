# Always prefer setuptools over distutils
from setuptools import setup, find_packages
import pathlib

here = pathlib.Path(__file__).parent.resolve()
long_description = (here / "README.md").read_text(encoding="utf-8")

setup(
    name="tdnnsplate",  # Required
    version="0.1.0",  # Required
    description="tdnnsplate is a Python library "
                "for locking-free finite element analysis of Reissner-Mindlin plates "
                "with tangential-displacement normal-normal-moment elements.",  # Optional
    long_description=long_description,  # Optional
    # Denotes that our long_description is in Markdown; valid values are
    # text/plain, text/x-rst, and text/markdown
    long_description_content_type="text/markdown",  # Optional (see note above)
    classifiers=[  # Optional
        # How mature is this project? Common values are
        #   3 - Alpha
        #   4 - Beta
        #   5 - Production/Stable
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Programming Language :: Python :: 3.8",
        "Operating System :: OS Independent",
    ],
    keywords="finite elements, plates, reissner-mindlin, mixed methods, hybridization",  # Optional
    packages=find_packages(),  # Required
    # Specify which Python versions you support. In contrast to the
    # 'Programming Language' classifiers above, 'pip install' will check this
    # and refuse to install the project if the version does not match.
    python_requires=">=3.8, <4",
    install_requires=[
        "joblib>=1.2.0",
        "numpy>=1.22",
        "pandas>=1.5.3",
        "scipy>=1.10.0",
    ],  # Optional
    extras_require={  # Optional
        "test": ["pytest", "pytest-cov"],
    },
    # Entry points. The following provides a command called `tdnnsplate`
    # which executes the function `main` from the cli module.
    entry_points={  # Optional
        "console_scripts": [
            "tdnnsplate=tdnnsplate.cli:main",
        ],
    },
)
