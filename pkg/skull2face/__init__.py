'''skull2face: skull -> face metric learning and face-gallery retrieval'''

from skull2face.data import (Domain, View, Sample, SubjectRecord, Manifest, Triplet, TripletSet,
                             load_manifest, write_manifest, enumerate_triplets, split_triplets,
                             read_triplets_csv, write_triplets_csv)
from skull2face.imaging import ImageGray, AugmentConfig, load_image, resize_bilinear, augment
from skull2face.features import (FeatureVector, FeatureTable, extract_baseline, face_embedding,
                                 skull_features, compute_feature_table, load_feature_table,
                                 write_feature_table)
from skull2face.model import ProjectionHead, ModelCheckpoint, init_head, save_checkpoint, load_checkpoint
from skull2face.training import TrainConfig, TrainReport, triplet_loss, loss_gradient, triplet_accuracy, train
from skull2face.retrieval import (GalleryIndex, RankedList, build_index, query, confidence,
                                  merge_galleries)
from skull2face.metrics import (RelevanceJudgments, MetricsReport, recall_at_k, map_at_k, mrr_at_k,
                                evaluate)
from skull2face.synth import SynthConfig, generate, generate_distractors
from skull2face.config import RunConfig, load_run_config

__version__ = '0.1.0'
