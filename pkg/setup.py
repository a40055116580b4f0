from setuptools import setup, find_packages

setup(
    name="rcosims",
    version="0.1",
    packages=find_packages(),
    install_requires=[
        'numpy',
        'numba',
        'scipy',
        'pandas',
        'tqdm',
        'joblib',
    ],
    entry_points={
        'console_scripts': [
            'rcosims=rcosims.cli:main',
        ],
    },
)
