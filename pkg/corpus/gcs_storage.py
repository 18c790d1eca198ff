"""
Google Cloud Storage Utility Module

Optional persistence for corpora and reports: reads gs:// corpus objects and
uploads finished report directories. Everything works without the package
installed as long as no gs:// path or --use-gcs flag is used.
"""

import json
import os
from typing import Dict, List, Optional, Tuple, TYPE_CHECKING
import logging

from errors import InputFormatError

logger = logging.getLogger(__name__)

try:
    from google.cloud import storage
    GCS_AVAILABLE = True
except ImportError:
    logger.debug("google-cloud-storage not installed. GCS features will be disabled.")
    GCS_AVAILABLE = False
    if TYPE_CHECKING:
        from google.cloud import storage

CONTENT_TYPES = {
    ".json": "application/json",
    ".tsv": "text/tab-separated-values",
    ".gp": "text/plain",
    ".txt": "text/plain",
}


def split_gs_path(gs_path: str) -> Tuple[str, str]:
    """gs://bucket/a/b.txt -> ("bucket", "a/b.txt")"""
    if not gs_path.startswith("gs://"):
        raise ValueError(f"not a gs:// path: {gs_path}")
    bucket, _, blob = gs_path[len("gs://"):].partition("/")
    if not bucket or not blob:
        raise ValueError(f"gs:// path needs a bucket and an object name: {gs_path}")
    return bucket, blob


class ReportStorage:
    """Google Cloud Storage bucket holding corpora and analysis reports"""

    def __init__(self, bucket_name: Optional[str] = None, project_id: Optional[str] = None,
                 location: Optional[str] = None, create_bucket: bool = True, client=None):
        """
        Initialize GCS Storage client

        Args:
            bucket_name: Name of the GCS bucket (defaults to env var GCS_BUCKET_NAME)
            project_id: GCP project ID (defaults to env var GCP_PROJECT_ID)
            location: Location of a newly created bucket (defaults to env var GCS_LOCATION)
            create_bucket: Create the bucket when it does not exist; readers pass False
            client: Pre-built storage client; tests pass a fake here
        """
        if client is None and not GCS_AVAILABLE:
            raise ImportError(
                "google-cloud-storage is not installed. "
                "Install it with: pip install google-cloud-storage"
            )

        self.bucket_name = bucket_name or os.getenv('GCS_BUCKET_NAME')
        self.project_id = project_id or os.getenv('GCP_PROJECT_ID')
        self.location = location or os.getenv('GCS_LOCATION', 'us-east1')

        if not self.bucket_name:
            raise ValueError(
                "Bucket name not provided. Set GCS_BUCKET_NAME environment variable "
                "or pass bucket_name parameter."
            )

        try:
            self.client = client if client is not None else storage.Client(project=self.project_id)
            self.bucket = self._get_or_create_bucket() if create_bucket else self.client.bucket(self.bucket_name)
            logger.info(f"Using GCS bucket: {self.bucket_name}")
        except Exception as e:
            logger.error(f"Failed to initialize GCS client: {e}")
            raise

    def _get_or_create_bucket(self):
        """Existing bucket, or a new one in self.location"""
        bucket = self.client.lookup_bucket(self.bucket_name)
        if bucket is not None:
            logger.info(f"Found existing bucket: {self.bucket_name}")
            return bucket
        logger.info(f"Bucket {self.bucket_name} not found. Creating it in {self.location}...")
        bucket = self.client.create_bucket(self.bucket_name, location=self.location)
        logger.info(f"Created bucket: {self.bucket_name}")
        return bucket

    def upload_json(self, data: Dict, blob_path: str) -> str:
        """Upload one JSON document with sorted keys; returns its gs:// path"""
        try:
            blob = self.bucket.blob(blob_path)
            payload = json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True)
            blob.upload_from_string(payload, content_type='application/json')
            gs_path = f"gs://{self.bucket_name}/{blob_path}"
            logger.info(f"Uploaded {len(payload)} bytes to {gs_path}")
            return gs_path
        except Exception as e:
            logger.error(f"Failed to upload {blob_path}: {e}")
            raise

    def upload_file(self, local_path: str, destination_path: Optional[str] = None) -> str:
        """
        Upload a local file to Cloud Storage

        Args:
            local_path: Path to local file
            destination_path: Destination path in GCS (defaults to basename of local_path)

        Returns:
            GCS blob path (gs://bucket/path)
        """
        try:
            if not os.path.exists(local_path):
                raise FileNotFoundError(f"Local file not found: {local_path}")

            if destination_path is None:
                destination_path = os.path.basename(local_path)

            blob = self.bucket.blob(destination_path)
            content_type = CONTENT_TYPES.get(os.path.splitext(local_path)[1])
            blob.upload_from_filename(local_path, content_type=content_type)

            gs_path = f"gs://{self.bucket_name}/{destination_path}"
            logger.info(f"Uploaded {local_path} to {gs_path}")
            return gs_path
        except Exception as e:
            logger.error(f"Failed to upload file {local_path}: {e}")
            raise

    def upload_directory(self, local_dir: str, prefix: str) -> List[str]:
        """Upload every file below local_dir, keeping relative paths under prefix"""
        uploaded = []
        for root, _, files in os.walk(local_dir):
            for name in sorted(files):
                local_path = os.path.join(root, name)
                relative = os.path.relpath(local_path, local_dir).replace(os.sep, "/")
                destination = f"{prefix.rstrip('/')}/{relative}" if prefix else relative
                uploaded.append(self.upload_file(local_path, destination))
        logger.info(f"Uploaded {len(uploaded)} report files under gs://{self.bucket_name}/{prefix}")
        return uploaded

    def download_bytes(self, blob_path: str) -> bytes:
        try:
            blob = self.bucket.blob(blob_path)
            if not blob.exists():
                raise InputFormatError("object not found", path=f"gs://{self.bucket_name}/{blob_path}")
            data = blob.download_as_bytes()
            logger.info(f"Downloaded {len(data)} bytes from gs://{self.bucket_name}/{blob_path}")
            return data
        except InputFormatError:
            raise
        except Exception as e:
            logger.error(f"Failed to download {blob_path}: {e}")
            raise


def read_gcs_bytes(gs_path: str, client=None) -> bytes:
    """Fetch a gs://bucket/object into memory"""
    bucket, blob = split_gs_path(gs_path)
    return ReportStorage(bucket_name=bucket, create_bucket=False, client=client).download_bytes(blob)
