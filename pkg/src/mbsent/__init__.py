"""mbsent: corpus construction, annotation, and sentiment classification
for colloquial Persian microblog text."""

__version__ = "0.1.0"
