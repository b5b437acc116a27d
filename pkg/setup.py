from setuptools import setup, find_packages

setup(
    name="dnt-sync",
    version="0.1.0",
    package_dir={"": "backend"},
    packages=find_packages(where="backend", exclude=["tests", "tests.*"]),
    install_requires=[
        "fastapi",
        "uvicorn",
        "sqlalchemy",
        "pydantic>=2",
        "pydantic-settings",
        "python-dotenv",
        "numpy>=1.25",
        "scipy",
        "pandas",
    ],
    extras_require={"test": ["pytest", "httpx"]},
    entry_points={"console_scripts": ["dnt-sync = app.cli:main"]},
    python_requires=">=3.9",
)
