import os

from hypothesis import settings

# derandomized so the suite itself is reproducible
settings.register_profile("repro", derandomize=True, deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))
