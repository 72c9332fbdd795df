from setuptools import setup, find_packages

setup(
    name="ikdr",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "pandas>=1.5",
        "python-dotenv>=1.0.0",
        "rich>=13.0.0",
    ],
    entry_points={
        "console_scripts": [
            "ikdr=ikdr.main:main",
        ],
    },
    python_requires=">=3.8",
)
