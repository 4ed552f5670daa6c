# This file was auto-generated by Shut. DO NOT EDIT
# For more information about Shut, check out https://pypi.org/project/shut/

from __future__ import print_function
import io
import os
import setuptools
import sys

command = sys.argv[1] if len(sys.argv) >= 2 else None

readme_file = 'README.md'
if os.path.isfile(readme_file):
  with io.open(readme_file, encoding='utf8') as fp:
    long_description = fp.read()
else:
  print("warning: file \"{}\" does not exist.".format(readme_file), file=sys.stderr)
  long_description = None

requirements = [
  'click >=8.0',
  'numpy >=1.21,<2.0.0',
  'scipy >=1.7,<2.0.0',
  'pandas >=1.5',
]
test_requirements = [
  'pynose >=1.4,<2.0.0',
  'pytest >=7.0',
]

setuptools.setup(
  name = 'lmctree',
  version = '0.1.0',
  author = 'The lmctree authors',
  author_email = None,
  description = 'Linear mode connectivity experiments for soft decision-tree ensembles.',
  long_description = long_description,
  long_description_content_type = 'text/markdown',
  url = 'https://github.com/lmctree/lmctree',
  license = 'MIT',
  packages = setuptools.find_packages('lib', ['test', 'test.*', 'tests', 'tests.*', 'docs', 'docs.*']),
  package_dir = {'': 'lib'},
  include_package_data = True,
  install_requires = requirements,
  extras_require = {'test': test_requirements},
  tests_require = test_requirements,
  python_requires = '>=3.7,<4.0.0',
  data_files = [],
  entry_points = {
    'console_scripts': [
      'lmctree = lmctree.__main__:main',
    ]
  },
  cmdclass = {},
  keywords = [],
  classifiers = [],
  zip_safe = True,
)
