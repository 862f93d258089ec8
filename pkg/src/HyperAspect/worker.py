from pathlib import Path

from PySide6.QtCore import QThread, Signal

from .checkpoint import save_model
from .training import train, write_loss_log
from .utils import format_float

MODEL_FILE = "model.hdae"
LOSS_LOG_FILE = "losses.csv"


# --- Worker Thread for Background Training ---
class TrainingWorker(QThread):
    progress = Signal(str)
    epoch_finished = Signal(object)  # LossReport of the finished epoch
    finished = Signal(str, bool)
    error = Signal(str)

    def __init__(
        self,
        config,
        dataset,
        lexicon,
        vocab,
        table,
        *,  # Make subsequent args keyword-only
        out_dir=None,
        stopwords=None,
        parent=None,
    ):
        """
        Initialize a worker thread that trains a model in the background.

        Args:
            config (TrainConfig): Training hyper-parameters
            dataset (Dataset): Training and optional validation segments
            lexicon (SeedLexicon): Seed words per aspect
            vocab (Vocabulary): Vocabulary of the embedding table
            table (EmbeddingTable): Word vectors
            out_dir (str, optional): Directory receiving model.hdae and
                losses.csv when training succeeds
            stopwords (Iterable[str], optional): Words removed from the
                segments, saved with the model
            parent (QObject, optional): Parent object for the thread.

        Note:
            run() never raises. Once ``finished`` has been emitted the trained
            model is available as ``result`` and a failure as ``exception``.
        """
        super().__init__(parent)
        self.config = config
        self.dataset = dataset
        self.lexicon = lexicon
        self.vocab = vocab
        self.table = table
        self.out_dir = Path(out_dir) if out_dir else None
        self.stopwords = stopwords
        self.result = None
        self.exception = None
        self._is_running = True
        self._success = False

    def run(self):
        """
        Train, then write the checkpoint and the loss log.

        Side effects:
            - Emits progress and epoch_finished once per epoch
            - Emits error if training or writing fails
            - Always emits finished("train", success); a cancelled run is not
              a success and writes nothing
        """
        self._is_running = True
        self._success = False
        try:
            self.progress.emit(f"Training {self.config.mode} model...")
            self.result = train(
                self.config,
                self.dataset,
                self.lexicon,
                self.vocab,
                self.table,
                stopwords=self.stopwords,
                progress=self._on_epoch,
                should_stop=lambda: not self._is_running,
            )
            if self.result.cancelled:
                self.progress.emit("Training cancelled.")
            else:
                if self.out_dir:
                    self._write_outputs()
                self._success = True
        except Exception as e:
            self.exception = e
            self.error.emit(f"Training failed: {e}")
            self._success = False
        finally:
            self._is_running = False
            self.finished.emit("train", self._success)

    def stop(self):
        """
        Request the training loop to stop before its next mini-batch.

        Side effects:
            - Sets internal _is_running flag to False
            - Emits a progress signal indicating cancellation was requested
        """
        self._is_running = False
        self.progress.emit("Training cancellation requested...")

    def _on_epoch(self, report):
        self.epoch_finished.emit(report)
        self.progress.emit(
            f"Epoch {report.epoch}/{self.config.epochs}: total loss {format_float(report.total)}"
        )

    def _write_outputs(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        save_model(self.result.model, self.out_dir / MODEL_FILE)
        write_loss_log(self.out_dir / LOSS_LOG_FILE, self.result.reports)
        self.progress.emit(f"Saved model and loss log to '{self.out_dir}'")
