# setup.py

from setuptools import setup, find_packages

# Read the long description from README.md
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name='hilonet',
    version='1.0.0',
    description='Hierarchical imitation learning from observation with sub-goals drawn from expert demonstrations.',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests', 'tests.*']),
    py_modules=['main'],
    include_package_data=True,
    install_requires=[
        'numpy>=1.22',
        'matplotlib>=3.5',
        'PyYAML>=6.0',
        'python-dotenv>=1.0.0',
        'Cerberus>=1.3',
    ],
    entry_points={
        'console_scripts': [
            'hilonet=main:main',  # Allows running the tool via the command `hilonet`
        ],
    },
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.8',
)
