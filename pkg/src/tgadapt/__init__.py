"""tgadapt: adaptive sampling and training for continuous-time dynamic graphs."""

from .aggregators import (ModelConfig, edge_predictor, graphmixer_layer,
                          model_loss, tgat_layer, tgat_time_encode)
from .autodiff import Tensor, backward
from .cache import CacheState, cache_report, lookup, make_cache, maybe_replace, oracle_cache
from .encoders import (EncoderConfig, build_neighbor_embedding,
                       build_target_embedding, compute_frequencies,
                       freq_encode, identity_encode, time_encode)
from .finder import (NeighborQuery, Neighborhood, batch_find, bench_finder,
                     find_recent, find_uniform, pivot)
from .graph import (Event, SplitSpec, TemporalGraph, build_graph,
                    chronological_split, ingest_events, load_features,
                    load_manifest, save_dataset, save_features,
                    temporal_neighborhood_size)
from .params import ParamStore
from .sampler import (PolicyOutput, SamplerConfig, decode_policy,
                      mixer_transform, sample_loss_graphmixer,
                      sample_loss_tgat, sample_without_replacement,
                      update_sampler)
from .selector import ImportanceScores, init_scores, select_batch, update_scores
from .synth import SynthConfig, generate, generate_files
from .training import RunConfig, Trainer, evaluate_mrr, run_experiment

__version__ = "0.1.0"
