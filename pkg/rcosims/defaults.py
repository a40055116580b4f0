MNIST_TEACHER_SPEC = {
    'input_shape': [1, 28, 28],
    'layers': [
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 784, 'fan_out': 256},
        {'kind': 'relu'},
        {'kind': 'dense', 'fan_in': 256, 'fan_out': 10},
    ],
    'num_classes': 10,
    # hidden activations
    'feature_tap': 2,
}

MNIST_STUDENT_SPEC = {
    'input_shape': [1, 28, 28],
    'layers': [
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 784, 'fan_out': 32},
        {'kind': 'relu'},
        {'kind': 'dense', 'fan_in': 32, 'fan_out': 10},
    ],
    'num_classes': 10,
    'feature_tap': 2,
}

CIFAR10_TEACHER_SPEC = {
    'input_shape': [3, 32, 32],
    'layers': [
        {'kind': 'conv2d-3x3', 'fan_in': 3, 'fan_out': 16},
        {'kind': 'relu'},
        {'kind': 'avgpool2x2'},
        {'kind': 'conv2d-3x3', 'fan_in': 16, 'fan_out': 32},
        {'kind': 'relu'},
        {'kind': 'avgpool2x2'},
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 2048, 'fan_out': 10},
    ],
    'num_classes': 10,
    # pooled 32x8x8 maps
    'feature_tap': 5,
}

CIFAR10_STUDENT_SPEC = {
    'input_shape': [3, 32, 32],
    'layers': [
        {'kind': 'conv2d-3x3', 'fan_in': 3, 'fan_out': 8},
        {'kind': 'relu'},
        {'kind': 'avgpool2x2'},
        {'kind': 'conv2d-3x3', 'fan_in': 8, 'fan_out': 16},
        {'kind': 'relu'},
        {'kind': 'avgpool2x2'},
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 1024, 'fan_out': 10},
    ],
    'num_classes': 10,
    'feature_tap': 5,
}

SYNTHETIC_TEACHER_SPEC = {
    'input_shape': [1, 8, 8],
    'layers': [
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 64, 'fan_out': 64},
        {'kind': 'relu'},
        {'kind': 'dense', 'fan_in': 64, 'fan_out': 10},
    ],
    'num_classes': 10,
    'feature_tap': 2,
}

SYNTHETIC_STUDENT_SPEC = {
    'input_shape': [1, 8, 8],
    'layers': [
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 64, 'fan_out': 16},
        {'kind': 'relu'},
        {'kind': 'dense', 'fan_in': 16, 'fan_out': 10},
    ],
    'num_classes': 10,
    'feature_tap': 2,
}

DEFAULT_SPECS = {
    'mnist': (MNIST_TEACHER_SPEC, MNIST_STUDENT_SPEC),
    'fashion-mnist': (MNIST_TEACHER_SPEC, MNIST_STUDENT_SPEC),
    'cifar10': (CIFAR10_TEACHER_SPEC, CIFAR10_STUDENT_SPEC),
    'synthetic': (SYNTHETIC_TEACHER_SPEC, SYNTHETIC_STUDENT_SPEC),
}

DEFAULT_DISTILL_CONFIG = {
    # softening temperature
    'temperature': 5.0,
    # weight of the KL term
    'balance': 1.0,
    # multiply the KL term by temperature**2
    'kl_grad_scale': True,
    # one of kd, hint, hint+kd
    'loss_kind': 'kd',
    'hint_weight': 1.0,
    # multi-stage runs restart the lr schedule at every anchor
    'restart_lr': True,
}

DEFAULT_SGD_CONFIG = {
    'lr': 0.05,
    'momentum': 0.9,
    'weight_decay': 5e-4,
    # None places drops at 62.5%, 75% and 87.5% of the epochs
    'drop_epochs': None,
    'drop_factor': 0.1,
}

DEFAULT_DATASET_CONFIG = {
    # mnist, fashion-mnist, cifar10 or synthetic
    'name': 'synthetic',
    'train_images': None,
    'train_labels': None,
    'test_images': None,
    'test_labels': None,
    'train_files': None,
    'test_files': None,
    # caps applied after loading; None keeps everything
    'train_size': None,
    'test_size': None,
    # carved out of the training set for greedy search and val KL; None
    # picks 10000 for the image datasets and a fifth of a synthetic set
    'val_size': None,
    'split_seed': 0,
    'normalize': True,
    'synthetic': {
        'n_train': 2000,
        'n_test': 500,
        'input_shape': [1, 8, 8],
        'class_count': 10,
        'noise': 0.3,
        'seed': 0,
    },
}

DEFAULT_EXPERIMENT_CONFIG = {
    'dataset': DEFAULT_DATASET_CONFIG,
    'teacher': {
        # None picks the default spec for the dataset
        'spec': None,
        'epochs': 15,
        'batch_size': 64,
        'seed': 1,
        'capture_every': 1,
        # epoch or iteration
        'capture_unit': 'epoch',
        'sgd': DEFAULT_SGD_CONFIG,
    },
    'student': {
        'spec': None,
        # None uses the teacher's epochs
        'epochs': None,
        'batch_size': 64,
        'sgd': DEFAULT_SGD_CONFIG,
        'snapshot_every': 0,
        'eval_batch_size': 1000,
    },
    'distill': DEFAULT_DISTILL_CONFIG,
    # a single strategy block or a list of named arms
    'strategy': None,
    'arms': None,
    'seeds': [0],
    'analysis': {
        'kl_curve': True,
        'pca': True,
        # noise sweep between the first two arms; None disables it
        'noise': {
            'arms': None,
            'deltas': [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            'seed': 0,
        },
    },
    'threads': 1,
}

# strategy keys allowed per mode, besides 'mode' and 'name'
STRATEGY_KEYS = {
    'kd': (),
    'softmax': (),
    'anchor': ('anchor_epoch',),
    'eei': ('gap', 'n_anchors'),
    'one_stage_eei': ('gap', 'n_anchors'),
    'gs': ('delta',),
}
