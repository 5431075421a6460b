"""Exporter error hierarchy."""


class ExportError(Exception):
    """Base class for every error this package raises on purpose."""


class UnknownModelError(ExportError):
    def __init__(self, name, known):
        super().__init__(f"unknown model {name!r}; known: {', '.join(known)}")
        self.name = name


class EmptyDirectoryError(ExportError):
    def __init__(self, directory):
        super().__init__(f"no images found in {directory}")
        self.directory = directory


class UnreadableImageError(ExportError):
    def __init__(self, path, reason):
        super().__init__(f"cannot read image {path}: {reason}")
        self.path = path


class DuplicateImageIdError(ExportError):
    def __init__(self, image_id, paths):
        super().__init__(
            f"image id {image_id!r} produced by more than one file: "
            f"{', '.join(str(p) for p in paths)}"
        )
        self.image_id = image_id
