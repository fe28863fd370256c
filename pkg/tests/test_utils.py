# tests/test_utils.py

import logging
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from app.logger import setup_logging
from app.utils import MANIFEST_NAME, RunManifest, content_fingerprint, ensure_run_dir


class TestRunManifest(unittest.TestCase):
    def setUp(self):
        """
        Set up a temporary run directory.
        """
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = ensure_run_dir(Path(self.tmp.name) / 'runs' / 'a')

    def tearDown(self):
        """
        Remove the temporary directory.
        """
        self.tmp.cleanup()

    def test_git_style_fingerprint(self):
        path = self.run_dir / 'hello.txt'
        path.write_bytes(b'hello\n')
        self.assertEqual(content_fingerprint(path), 'ce013625030ba8dba906f756967f9e9ca394464a')

    def test_write_and_load(self):
        artifact = self.run_dir / 'curve.csv'
        artifact.write_text('env_steps,mean_return,success_rate,mean_length\n')
        manifest = RunManifest('train', config={'seed': 3}, seeds=[3], fingerprint='abc')
        manifest.add_artifact('curve', artifact, self.run_dir)
        manifest.add_input('curve', artifact)
        self.assertEqual(manifest.write(self.run_dir), self.run_dir / MANIFEST_NAME)

        loaded = RunManifest.load(self.run_dir)
        self.assertEqual(loaded, manifest)
        self.assertEqual(loaded.artifacts, {'curve': 'curve.csv'})


class TestLogging(unittest.TestCase):
    def setUp(self):
        """
        Set up a detached logger standing in for the root logger.
        """
        self.tmp = tempfile.TemporaryDirectory()
        self.logger = logging.Logger('hilonet-test')

    def tearDown(self):
        """
        Close the handlers and remove the temporary directory.
        """
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)
        self.tmp.cleanup()

    def test_file_and_console_handlers(self):
        with patch('app.logger.logging.getLogger', return_value=self.logger):
            setup_logging(self.tmp.name, level='debug')
            setup_logging(self.tmp.name)
        self.assertEqual(len(self.logger.handlers), 2)
        self.assertTrue((Path(self.tmp.name) / 'hilonet.log').exists())

    def test_level_from_environment(self):
        with patch.dict('os.environ', {'LOG_LEVEL': 'ERROR'}), \
                patch('app.logger.logging.getLogger', return_value=self.logger):
            setup_logging(self.tmp.name)
        self.assertEqual(self.logger.level, logging.ERROR)


if __name__ == '__main__':
    unittest.main()
