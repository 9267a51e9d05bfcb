from setuptools import setup

setup(name='glean',
      version='0.1.0',
      description='GLEAN - Generative latent bank image restoration',
      packages=['glean', 'glean.imaging', 'glean.models', 'glean.observatory',
                'glean.simulation', 'glean.training'],
      scripts=['bin/glean_cli.py'],
      python_requires='>=3.8',
      install_requires=[
          'numpy',
          'opencv-python',
          'pypng',
          'scikit-image',
          'tqdm',
          'torch>=2.0',
          'kornia',
          'PyYAML',
      ],
      extras_require={
          'vgg': ['torchvision'],
      },
    )
