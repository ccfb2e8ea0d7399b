from setuptools import setup, find_packages

setup(
    name='ecrconv',
    version='1.0.0',
    description='Sparse convolution with the ECR and PECR storage formats',
    packages=find_packages(exclude=('tests', 'tests.*')),
    python_requires='>=3.7',
    install_requires=['numpy', 'scipy'],
    extras_require={
        'test': ['pytest>=7'],
        'doc': ['sphinx']
    },
    entry_points={'console_scripts': ['ecrconv = ecrconv.cli:main']}
)
