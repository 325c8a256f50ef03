from .layers import LSTM, BatchNorm2D, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, ReLU, Softmax
from .network import (Network, build_from_architecture, build_lstm_classifier, build_shallow_cnn,
                      count_parameters, load_checkpoint, load_weights_into, save_checkpoint)

__all__ = [
    "LSTM", "BatchNorm2D", "Conv2D", "Dense", "Dropout", "Flatten", "Layer", "MaxPool2D", "ReLU",
    "Softmax", "Network", "build_from_architecture", "build_lstm_classifier", "build_shallow_cnn",
    "count_parameters", "load_checkpoint", "load_weights_into", "save_checkpoint",
]
