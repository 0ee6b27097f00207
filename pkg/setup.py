from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="strikesim",
    version="1.0.0",
    author="strikesim developers",
    description="Anticipatory strike-point prediction and robot interception benchmark",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["strikesim", "strikesim.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.24.0",
        "pandas>=2.1.0",
        "pydantic>=2.5.0",
        "python-dotenv>=1.0.0",
        "scipy>=1.11.0",
        "scikit-learn>=1.3.0",
        "tomli>=2.0; python_version < '3.11'",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "strikesim=strikesim.harness.main:main",
        ],
    },
)
