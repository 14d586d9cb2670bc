import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from models.records import SyntheticSpec
from pipelines.body_typing import cluster_bodies, propagate_labels, type_histogram, wearer_histogram
from pipelines.catalog_io import save_catalog
from pipelines.synthetic import generate_synthetic

# Default desk-scale dress catalog: 60 bodies over 5 planted types, 400 garments
spec = SyntheticSpec(seed=42)
catalog = generate_synthetic(spec)

out = Path('data/catalog.txt')
save_catalog(catalog, out)

print(f'Generated {len(catalog.bodies)} bodies and {len(catalog.garments)} garments')
print(f'Observed positives: {len(catalog.positives)}')

print('\nBodies per planted type:')
for t in range(spec.num_types):
    count = sum(1 for planted in catalog.planted_types.values() if planted == t)
    pct = (count / len(catalog.bodies)) * 100
    print(f'  Type {t + 1}: {count} ({pct:.1f}%)')

print('\nGarments by number of distinct wearers:')
print(wearer_histogram(catalog).to_string())

labels = propagate_labels(catalog, cluster_bodies(catalog, k=spec.num_types, seed=0))
print('\nGarments by number of body types after propagation:')
print(type_histogram(labels, [g.garment_id for g in catalog.garments]).to_string())
