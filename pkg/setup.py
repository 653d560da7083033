from setuptools import setup, find_packages


setup(
    name='pgov',
    version='0.1.0',
    description='Partial-to-global curriculum for open-vocabulary 3D semantic segmentation on synthetic RGB-D scenes',
    packages=find_packages(exclude=['tests']),
    package_data={'': ['data/*.py']},
    include_package_data=True,
    python_requires='>=3.8',
    install_requires=['numpy >= 1.20', 'scipy >= 1.6'],
    extras_require={'test': ['pytest >= 6']},
    entry_points={
        "console_scripts": ["pgov = pgov.console:main"]
    }
)
