"""
Setup configuration for the fsmf-tool package.
"""

from setuptools import setup, find_packages
import os

# Read the contents of README file
this_directory = os.path.abspath(os.path.dirname(__file__))
with open(os.path.join(this_directory, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

# Read requirements and separate runtime from development tools
with open('requirements.txt') as f:
    all_requirements = [line.strip() for line in f if line.strip() and not line.startswith('#')]

dev_packages = ('pytest', 'flake8', 'black', 'mypy')
core_requirements = []
dev_requirements = []

for req in all_requirements:
    req = req.split('#')[0].strip()
    if req.startswith(dev_packages):
        dev_requirements.append(req)
    else:
        core_requirements.append(req)

setup(
    name="fsmf-tool",
    version="0.1.0",
    author="Alvaro Murillo",
    author_email="dev@alvaromurillo.com",
    description="Fixed-support matrix factorization: tractability certificates, exact SVD-based solvers and landscape experiments",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/alvaromurillo/fsmf-tool",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.10",
    install_requires=core_requirements,
    extras_require={
        "dev": dev_requirements,
    },
    entry_points={
        "console_scripts": [
            "fsmf-tool=fsmf_tool.cli:cli",
        ],
    },
    keywords="sparse matrix factorization fixed support butterfly svd palm",
    project_urls={
        "Bug Reports": "https://github.com/alvaromurillo/fsmf-tool/issues",
        "Source": "https://github.com/alvaromurillo/fsmf-tool",
        "Documentation": "https://github.com/alvaromurillo/fsmf-tool#readme",
    },
)
