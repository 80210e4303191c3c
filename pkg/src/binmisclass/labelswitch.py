"""Selecting between the two likelihood modes of the misclassification model.

The mixture likelihood takes the same value at ``(beta, gamma1, gamma2)``
and at ``(-beta, gamma2, gamma1)``.  Only one of those orientations has
both subject-averaged correct-classification probabilities above one half,
and that is the one reported.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ObservedDataset, ParameterSet, average_rates, transpose_parameter_set


@dataclass(frozen=True)
class CorrectionReport:
    flipped: bool
    pre_sens: float
    pre_spec: float
    post_sens: float
    post_spec: float
    ambiguous: bool = False

    def to_dict(self) -> dict:
        return {
            "flipped": self.flipped,
            "ambiguous": self.ambiguous,
            "pre_sens": self.pre_sens,
            "pre_spec": self.pre_spec,
            "post_sens": self.post_sens,
            "post_spec": self.post_spec,
        }


def _dominant(rates) -> bool:
    return rates.sens > 0.5 and rates.spec > 0.5


def correct_label_switching(params: ParameterSet, data: ObservedDataset):
    """Return the orientation of ``params`` in which classification beats a coin flip.

    Returns ``(corrected_params, CorrectionReport)``.  When neither
    orientation has both averages above 0.5 the one with the larger
    ``sens + spec`` is returned and the report is marked ambiguous.
    """
    pre = average_rates(params, data)
    if _dominant(pre):
        return params, CorrectionReport(False, pre.sens, pre.spec, pre.sens, pre.spec)

    swapped = transpose_parameter_set(params)
    post = average_rates(swapped, data)
    if _dominant(post):
        return swapped, CorrectionReport(True, pre.sens, pre.spec, post.sens, post.spec)

    if post.sens + post.spec > pre.sens + pre.spec:
        return swapped, CorrectionReport(True, pre.sens, pre.spec, post.sens, post.spec,
                                         ambiguous=True)
    return params, CorrectionReport(False, pre.sens, pre.spec, pre.sens, pre.spec,
                                    ambiguous=True)
