
__author__ = 'The lmctree authors'
__version__ = '0.1.0'

from .errors import (LmcError, SpecError, BudgetExceeded, DataError,
  AssignmentError, VerificationError, ConfigError)
