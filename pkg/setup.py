"""
Setup script for the laplacian-solver package
"""

from setuptools import setup, find_packages

# Read long description from README
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="laplacian-solver",
    version="0.1.0",
    author="Omni Developer",
    author_email="developer@example.com",
    description="Randomized preconditioned solvers for graph Laplacian and SDD linear systems",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Software Development :: Libraries :: Python Modules",
    ],
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={"laplacian_solver": ["report_schema.json"]},
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.21.0",
        "scipy>=1.8.0",
        "networkx>=2.6",
        "pandas>=1.3.0",
        "openpyxl>=3.0.0",
        "jsonlines>=2.0.0",
        "tqdm>=4.62.0",
    ],
    entry_points={
        "console_scripts": [
            "laplacian-solver=laplacian_solver.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
)
