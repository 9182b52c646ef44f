import numpy as np
import matplotlib.pyplot as plt

from skull2face.config import derive_seed
from skull2face.data import Domain, View, enumerate_triplets, split_triplets
from skull2face.log import configure
from skull2face.metrics import RelevanceJudgments, evaluate
from skull2face.model import init_head
from skull2face.retrieval import build_index, merge_galleries
from skull2face.synth import SynthConfig, generate, generate_distractors
from skull2face.training import TrainConfig, train

SEED = 1
DISTRACTORS = 445
K_MAX = 30


def face_gallery(features, view=View.FRONT):
    faces = features.select(Domain.FACE, view)
    return build_index(zip(faces.names, (k[0] for k in faces.keys), (k[2] for k in faces.keys), faces.matrix))


if __name__ == '__main__':
    configure()
    cfg = SynthConfig(seed=derive_seed(SEED, 'synth'))
    data = generate(cfg)
    train_set, val_set = split_triplets(enumerate_triplets(data.manifest), 0.7, derive_seed(SEED, 'split'))

    dim = data.features.dim
    head = init_head(dim, dim, derive_seed(SEED, 'init'))
    checkpoint, report = train(TrainConfig(seed=derive_seed(SEED, 'shuffle')), train_set, data.features,
                               head, validation=val_set, progress=True)
    print(f'final loss {report.losses[-1]:.4f}, val accuracy {report.final_val_accuracy:.4f}')

    skulls = data.features.select(Domain.SKULL)
    probes = list(zip(skulls.names, checkpoint.head.embed(skulls.matrix)))
    queries = list(zip(skulls.names, (k[0] for k in skulls.keys)))

    # the 40-face gallery, then the same faces hidden among distractors
    gallery = face_gallery(data.features)
    mixed = merge_galleries(gallery, generate_distractors(cfg, DISTRACTORS))
    results = {}
    for name, index in (('gallery', gallery), ('mixed', mixed)):
        judgments = RelevanceJudgments.from_subjects(queries, index)
        label = f'{name} ({len(index)})'
        results[label] = evaluate(index, probes, judgments, K_MAX)
        print(label, results[label].summary(K_MAX))

    fig, axes = plt.subplots(1, 3, figsize=(14, 4))
    ks = np.arange(1, K_MAX + 1)
    for ax, metric in zip(axes, ('recall_at', 'map_at', 'mrr_at')):
        for name, result in results.items():
            series = getattr(result, metric)
            ax.plot(ks, [series[k] for k in ks], label=name)
        ax.set_title(metric.replace('_at', '@k'))
        ax.set_xlabel('k')
        ax.set_ylim(0., 1.05)
        ax.legend()
    plt.tight_layout()
    plt.show()

    plt.plot(report.losses)
    plt.title('loss')
    plt.show()
