"""Class names of the two pipeline tasks."""

EMOTIONS = ("fear", "disgust", "joy", "surprise", "confidence", "sadness", "anger", "uncertainty")
IDENTIFY_CLASSES = ("unrelated", "pandemic")
