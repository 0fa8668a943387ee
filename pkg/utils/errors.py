class FedSurvError(ValueError):
    """Base error carrying a message and machine-readable context"""

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = {key: value for key, value in context.items() if value is not None}

    def with_context(self, **context):
        """Return a copy of this error with extra context attached"""
        merged = dict(self.context)
        merged.update({key: value for key, value in context.items() if value is not None})
        error = type(self)(self.message, **merged)
        error.__cause__ = self
        return error

    def to_dict(self):
        return {
            'error': type(self).__name__,
            'message': self.message,
            'context': self.context
        }

    def __str__(self):
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in sorted(self.context.items()))
        return f"{self.message} ({details})"


class DataError(FedSurvError):
    """Invalid or unreadable survival data"""


class ConfigError(FedSurvError):
    """Invalid experiment configuration or arguments"""


class TrainingDivergedError(FedSurvError):
    """Parameters or losses became non-finite during training"""


class MetricError(FedSurvError):
    """Evaluation inputs are degenerate"""
