"""UWB posture monitoring pipeline."""
