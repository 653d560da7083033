#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Defines dataclasses that hold settings.

    Sets global constants; validation checks live in pgov.validation.

    Global constants set here:
        * artifact file names (see "GLOBAL CONSTANTS")
        * SETTINGS_DEFAULTS
        * PRESETS
        * CLI_DESCRIPTION, SUBCOMMANDS, CLI_OPTIONS

"""
import dataclasses
import typing

# GLOBAL CONSTANTS

THREADS_ENV_VARIABLE = 'PGOV_THREADS'
CONFIG_FILE_NAME = 'config.json'
MANIFEST_FILE_NAME = 'manifest.json'
SCENES_DIR_NAME = 'scenes'
FRAMES_DIR_NAME = 'frames'
SCENE_FILE_NAME = 'scene.pgov'
PSEUDO_LABEL_FILE_NAME = 'pseudo_labels.bin'
SCENE_VOCAB_FILE_NAME = 'scene_vocab.json'
CHECKPOINT_FILE_NAME = 'encoder_stage{stage}.ckpt'
LOSS_FILE_NAME = 'losses_stage{stage}.csv'
EVAL_REPORT_FILE_NAME = 'eval_report.csv'
CONFUSION_FILE_NAME = 'confusion.csv'
SUMMARY_FILE_NAME = 'summary.txt'
LOSS_PLOT_FILE_NAME = 'loss_curves.svg'
ABLATION_DIR_NAME = 'ablation'
ABLATION_TABLE_FILE_NAME = 'ablation.csv'
ABLATION_PLOT_FILE_NAME = 'ablation.svg'

# order in which `experiment` runs the stages
STAGES = ('synth', 'render', 'oracle', 'pretrain', 'pseudolabel',
          'finetune', 'eval')

# Settings DATACLASSES


@dataclasses.dataclass(frozen=True)
class SceneSettings:
    """ Holds scene generation settings. All attributes are required. """
    room_extent: typing.Tuple[float, float, float]
    n_train_scenes: int
    n_heldout_scenes: int
    objects_per_scene: int
    surface_density: float
    color_jitter: float
    categories: typing.Tuple[str, ...]


@dataclasses.dataclass(frozen=True)
class CameraSettings:
    """ Holds intrinsics, trajectory and rendering settings. """
    # pylint: disable=too-many-instance-attributes
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    n_frames: int
    frame_stride: int
    step_degrees: float
    orbit_radius_fraction: float
    eye_height_fraction: float
    target_height_fraction: float
    jitter: float
    point_radius_px: int
    view_color_noise: float


@dataclasses.dataclass(frozen=True)
class OracleSettings:
    """ Holds pixel-entity oracle noise and ingestion settings. """
    category_dropout_prob: float
    pixel_mislabel_prob: float
    boundary_erosion_px: int
    base_supervision: bool
    external_masks_dir: typing.Optional[str]


@dataclasses.dataclass(frozen=True)
class EncoderSettings:
    """ Holds point encoder shape. """
    hidden_sizes: typing.Tuple[int, ...]
    embedding_dim: int


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """ Holds optimizer and curriculum settings for both stages. """
    # pylint: disable=too-many-instance-attributes
    lambda_consistency: float
    learning_rate: float
    weight_decay: float
    adam_beta1: float
    adam_beta2: float
    adam_eps: float
    batch_size_stage1: int
    batch_size_stage2: int
    epochs_stage1: int
    epochs_stage2: int
    stage2_points_per_scene: int
    match_radius: float
    load_pretrained: bool
    finetune: bool
    seed: int


@dataclasses.dataclass(frozen=True)
class PseudoSettings:
    """ Holds repeated-grid-sampling pseudo-label settings. """
    voxel_size: float
    repetitions: int
    temperature: float
    confidence_threshold: float
    context_radius: float
    seed: int


@dataclasses.dataclass(frozen=True)
class EvalSettings:
    """ Holds evaluation vocabulary and base/novel split settings. """
    split: typing.Optional[str]
    base_ids: typing.Optional[typing.Tuple[int, ...]]
    novel_ids: typing.Optional[typing.Tuple[int, ...]]
    synonyms: typing.Dict[str, str]
    extra_entities: typing.Tuple[str, ...]


@dataclasses.dataclass(frozen=True)
class AblationSettings:
    """ Holds the seed set and the presets of the ablation suite. """
    seeds: typing.Tuple[int, ...]
    presets: typing.Tuple[str, ...]


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """ Holds immutable settings of one run. All attributes are
    required. """
    # pylint: disable=too-many-instance-attributes
    seed: int
    output_dir: str
    preset: str
    log_level: int
    log_to_file: bool
    log_file: str
    print_message_on_failure: bool
    scene: SceneSettings
    camera: CameraSettings
    oracle: OracleSettings
    encoder: EncoderSettings
    train: TrainConfig
    pseudo: PseudoSettings
    eval: EvalSettings
    ablation: AblationSettings


# maps section name of the config file to its dataclass
SECTIONS = dict(scene=SceneSettings, camera=CameraSettings,
                oracle=OracleSettings, encoder=EncoderSettings,
                train=TrainConfig, pseudo=PseudoSettings,
                eval=EvalSettings, ablation=AblationSettings)


def _get_default_settings() -> dict:
    """Returns default settings.

    Keys of the first level are either top-level attributes of
    PipelineConfig or section names (see SECTIONS); keys of a section
    refer to the attributes of its dataclass. Section seeds default to
    None and are derived from the global seed.

    Returns:
        Dictionary holding the default values

    """
    settings_defaults = dict(
        seed=0,
        output_dir='pgov_out',
        preset='full_curriculum',
        log_level=20,
        log_to_file=False,
        log_file='pgov.log',
        # if False, error messages will only be logged
        print_message_on_failure=True,
        scene=dict(
            room_extent=[5.0, 4.0, 2.6],  # meters, room spans [0, extent]
            n_train_scenes=8,
            n_heldout_scenes=2,
            objects_per_scene=6,  # furniture boxes besides floor/walls
            surface_density=800.0,  # points per square meter
            color_jitter=0.03,  # std of per-point color noise
            categories=['floor', 'wall', 'chair', 'table', 'sofa', 'bed',
                        'cabinet', 'bookshelf', 'door', 'window']
        ),
        camera=dict(
            width=64,
            height=48,
            fx=48.0,
            fy=48.0,
            cx=32.0,
            cy=24.0,
            n_frames=30,
            frame_stride=3,  # keep every n-th raw pose
            step_degrees=4.0,  # orbit angle between raw poses
            orbit_radius_fraction=0.3,  # of the smaller floor extent
            eye_height_fraction=0.55,  # of the room height
            target_height_fraction=0.3,
            jitter=0.05,  # meters, eye position jitter
            point_radius_px=1,
            view_color_noise=0.1  # 0 disables per-frame color change
        ),
        oracle=dict(
            category_dropout_prob=0.1,
            pixel_mislabel_prob=0.05,
            boundary_erosion_px=1,
            # base categories get ground-truth labels (needs eval.split)
            base_supervision=False,
            # read frame_%06d.entmask / .vocab.json from here instead
            external_masks_dir=None
        ),
        encoder=dict(
            hidden_sizes=[32, 32],
            embedding_dim=16
        ),
        train=dict(
            lambda_consistency=0.2,
            learning_rate=0.01,
            weight_decay=0.01,
            adam_beta1=0.9,
            adam_beta2=0.999,
            adam_eps=1e-8,
            batch_size_stage1=4,  # consecutive frames per step
            batch_size_stage2=1,  # scenes per step
            epochs_stage1=4,
            epochs_stage2=8,
            stage2_points_per_scene=8192,
            match_radius=0.02,  # meters, by_radius matching only
            load_pretrained=True,
            finetune=True,
            seed=None
        ),
        pseudo=dict(
            voxel_size=0.05,
            repetitions=8,
            temperature=0.07,
            confidence_threshold=0.5,
            context_radius=0.0,  # 0 predicts every point on its own
            seed=None
        ),
        eval=dict(
            split=None,  # "B15/N4", "B12/N7", "B10/N9" or None
            base_ids=None,  # explicit split, overrides `split`
            novel_ids=None,
            synonyms={'couch': 'sofa', 'shelf': 'bookshelf'},
            extra_entities=[]
        ),
        ablation=dict(
            seeds=[0, 1, 2],
            presets=['full_curriculum', 'stage1_only', 'no_consistency',
                     'no_pretrained_weights']
        )
    )
    return settings_defaults


SETTINGS_DEFAULTS = _get_default_settings()

# experiment presets: dotted key -> value, applied on top of the config
PRESETS = dict(
    full_curriculum=dict(),
    stage1_only={'train.finetune': False},
    no_consistency={'train.lambda_consistency': 0.0},
    no_pretrained_weights={'train.load_pretrained': False}
)

# CLI settings

CLI_DESCRIPTION = ('Partial-to-global curriculum for open-vocabulary 3D '
                   'semantic segmentation on synthetic RGB-D scenes. '
                   'Each stage reads its inputs from --out.')

SUBCOMMANDS = dict(
    synth='generate train and held-out scenes',
    render='render RGB-D frames along camera trajectories',
    oracle='produce per-frame vocabularies and pixel entity masks',
    pretrain='stage 1: train on partial clouds',
    pseudolabel='generate point-wise pseudo labels on global scenes',
    finetune='stage 2: train on global scenes',
    eval='segment held-out scenes and score them',
    experiment='run all stages for one preset',
    ablation='run every preset for every ablation seed',
    report='write summary.txt and loss_curves.svg'
)


def _get_cli_options() -> list:
    """Returns cli configuration shared by all subcommands.

    Returns:
        A list of lists, where the items of the second list are:
            * a list: passed as first argument to
            argparser.ArgParser.add_argument
            * a dictionary: passed via keyword expansion as additional
            arguments

    """
    helpmsg = 'JSON config; keys it omits keep their defaults.'
    config = [['--config'], dict(required=False, help=helpmsg)]

    helpmsg = ('Run directory. Default: output_dir of the config '
               f'("{SETTINGS_DEFAULTS["output_dir"]}").')
    out = [['--out'], dict(required=False, help=helpmsg)]

    helpmsg = 'Global seed, overrides the config.'
    seed = [['--seed'], dict(required=False, type=int, help=helpmsg)]

    helpmsg = f'Experiment preset, one of: {", ".join(PRESETS)}.'
    preset = [['--preset'], dict(required=False, help=helpmsg)]

    helpmsg = 'Write log to LOG_FILE. Filemode: "a".'
    log_file = [['-l', '--log_file'], dict(required=False, help=helpmsg)]

    helpmsg = 'Write log to STDOUT (default unless log_to_file is set).'
    log_to = [['-s', '--log_to_stdout'],
              dict(required=False, help=helpmsg, action='store_true')]

    helpmsg = 'Set log level to: "warning (30)".'
    quiet = [['-q', '--quiet'],
             dict(required=False, help=helpmsg, action='store_true')]

    helpmsg = 'Set log level to: "debug (10)".'
    debug = [['-b', '--debug'],
             dict(required=False, help=helpmsg, action='store_true')]

    return [config, out, seed, preset, log_file, log_to, quiet, debug]


CLI_OPTIONS = _get_cli_options()
