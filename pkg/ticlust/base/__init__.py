# ticlust/base/__init__.py
# Submodules are imported explicitly by their users; ticlust.protocol depends on base.errors.
