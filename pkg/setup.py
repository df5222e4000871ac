"""
SHADOWLAB Setup Configuration
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="shadowlab",
    version="1.0.0",
    description="Computational lab for pseudo-orbit shadowing on dendrites, hyperspaces and toral automorphisms",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["shadowlab", "shadowlab.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "matplotlib>=3.7.0",
        "pydantic>=2.0.0",
        "sqlalchemy>=2.0.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4.0",
            "pytest-cov>=4.1.0",
            "black>=23.0.0",
            "mypy>=1.0.0",
        ],
        "metrics": [
            "prometheus-client>=0.17.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "shadowlab=shadowlab.cli:main",
        ],
    },
)
