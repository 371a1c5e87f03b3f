"""Static malware detection on reduced feature sets.

Pipeline: clean -> robust + min-max scaling -> gain-ranked feature selection
or PCA -> two tree-ensemble instances on stratified halves of the training
split -> weighted soft vote.
"""

__version__ = "0.1.0"
