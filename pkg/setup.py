from setuptools import find_packages, setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [
        line.strip()
        for line in fh.read().splitlines()
        if line.strip() and not line.startswith("#")
    ]

setup(
    name="spleenlen",
    version="1.0.0",
    author="Paco",
    author_email="paco@example.com",
    description="Estimation de la longueur de la rate sur fantômes échographiques",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    py_modules=["main"],
    package_data={"src.reporting": ["templates/*"]},
    include_package_data=True,
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "spleenlen=main:main",
        ],
    },
)
