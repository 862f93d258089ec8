from setuptools import setup, find_packages

setup(
    name="HyperAspect",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=["numpy", "scikit-learn", "gensim", "loguru", "PySide6"],
    python_requires=">=3.10",
    entry_points={
        "console_scripts": [
            "hyperaspect=HyperAspect.__main__:main",
        ],
    },
    author="Alchemist-Aloha",
    description="Weakly supervised aspect extraction with hyperbolic disentangled seed words.",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
