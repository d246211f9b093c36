#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from typing import Optional


class PlanloomException(Exception):
    """Base exception for Planloom."""
    pass


class InvalidSettingValue(PlanloomException):
    """Exception raised when a setting value is invalid."""
    pass


class ScenarioParseError(PlanloomException):
    """Exception raised when a scenario file is not valid JSON."""
    pass


class ScenarioValidationError(PlanloomException):
    """Exception raised when a scenario violates one of its invariants."""

    def __init__(self, field_path: str, message: str, source: Optional[str] = None):
        """Initialize the exception.

        Args:
            field_path (str): Path of the offending field, e.g. `agents[0].track`.
            message (str): What is wrong with the field.
            source (Optional[str], optional): The file the scenario came from.
                Defaults to None.
        """
        self.field_path = field_path
        self.source = source
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}{field_path}: {message}")


class ShapeMismatchError(PlanloomException):
    """Exception raised when arrays have incompatible shapes."""
    pass


class ClusteringError(PlanloomException):
    """Exception raised when the anchor dictionary cannot be built."""
    pass


class DictionaryMismatchError(PlanloomException):
    """Exception raised when an anchor dictionary does not fit the model configuration."""
    pass


class EmptyDatasetError(PlanloomException):
    """Exception raised when a training or evaluation dataset is empty."""
    pass


class EmptyCandidateSetError(PlanloomException):
    """Exception raised when a selection is asked of an empty candidate set."""
    pass


class MissingReportError(PlanloomException):
    """Exception raised when a scenario has no hard case report."""
    pass


class CheckpointError(PlanloomException):
    """Exception raised when a checkpoint is missing or malformed."""
    pass


class InvalidBevGridError(PlanloomException):
    """Exception raised when a BEV grid holds non-finite values or a bad extent."""
    pass


class OutputFolderError(PlanloomException):
    """Exception raised when an output folder cannot be created."""
    pass
