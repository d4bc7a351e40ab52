import logging
import os
from logging import FileHandler
from logging import Formatter


def init_logger(filename='tdnnsplate.log', log_path="."):
    """
    Attaches a file handler to the package logger and returns it.

    Every module logs through a child of the ``tdnnsplate`` logger, so assembly,
    condensation and solver statistics all end up in the same file.

    Parameters
    ----------
    filename : str, optional
        The name of the log file. The default is 'tdnnsplate.log'.
    log_path : str, optional
        The folder of the log file. The default is ".".

    Returns
    -------
    custom_logger : logging.Logger
        The package logger.
    filename : str
        Full path of the log file.
    """
    filename = os.path.join(log_path, filename)
    log_format = (
        "%(asctime)s [%(levelname)s]: %(message)s in %(pathname)s:%(lineno)d")
    log_level = logging.INFO
    custom_logger = logging.getLogger("tdnnsplate")
    custom_logger.setLevel(log_level)
    target = os.path.abspath(filename)
    if not any(isinstance(h, FileHandler) and h.baseFilename == target
               for h in custom_logger.handlers):
        custom_logger_file_handler = FileHandler(filename)
        custom_logger_file_handler.setLevel(log_level)
        custom_logger_file_handler.setFormatter(Formatter(log_format))
        custom_logger.addHandler(custom_logger_file_handler)
    custom_logger.debug("Logger configured")
    return custom_logger, filename


def create_output_folder(folder):
    """
    Creates the folder a result file is written into.

    Parameters
    ----------
    folder : str
        The path of the folder; empty or None means the current directory.

    Returns
    -------
    folder : str
        The path of the folder used.
    """
    if not folder:
        return os.curdir
    if os.path.exists(folder):
        logging.getLogger(__name__).info("The folder {} already exists and it will be used".format(folder))
    else:
        os.makedirs(folder)
        logging.getLogger(__name__).info("The folder {} has been created.".format(folder))
    return folder
