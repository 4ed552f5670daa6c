# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Exception hierarchy. Everything the library raises on bad input derives from
#LmcError so the command-line can map it to an exit code in one place.
"""


class LmcError(Exception):
  pass


class SpecError(LmcError, ValueError):
  """
  Raised for an invalid #ArchitectureSpec, an invariance operation that does
  not belong to the spec it is applied to, or two models that do not share
  one spec.
  """


class BudgetExceeded(LmcError):
  """
  Raised when the number of invariance operations *count* of a spec exceeds
  the configured *budget*.
  """

  def __init__(self, count, budget):
    self.count = count
    self.budget = budget
    super(BudgetExceeded, self).__init__(
      'U = {} invariance operations exceeds the budget of {}'.format(count, budget))


class DataError(LmcError, ValueError):
  pass


class AssignmentError(LmcError, ValueError):
  pass


class VerificationError(LmcError):

  def __init__(self, report):
    self.report = report
    super(VerificationError, self).__init__(str(report))


class ConfigError(LmcError, ValueError):
  """
  Raised for an invalid experiment configuration, for example seed lists of
  different length or an unknown preset.
  """
