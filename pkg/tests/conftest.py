from hypothesis import settings

settings.register_profile("adashift", max_examples=50, deadline=None)
settings.load_profile("adashift")
