# Corpus ingestion and stream plumbing
