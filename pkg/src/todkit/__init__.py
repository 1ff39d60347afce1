"""Workbench for creating, validating, and evaluating multilingual
task-oriented dialogue datasets."""

from .data import (
    ActItem,
    ActSeq,
    ApiCall,
    BeliefState,
    Dataset,
    Dialogue,
    EntitySpan,
    SlotTriplet,
    Turn,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from .stateformat import (
    SubtaskContext,
    SubtaskKind,
    parse_act_seq,
    parse_api_decision,
    parse_belief_state,
    render_subtask_input,
    serialize_act_seq,
    serialize_belief_state,
)
from .kb import Database, Ontology, execute_api, canonicalize_value, slot_values
from .valuemap import ValueMapping, load_value_mapping, save_value_mapping
from .metrics import api_accuracy, bleu, da_accuracy, jga, normalize_entity, ser
from .evaluate import (
    EchoPredictor,
    EvalReport,
    ScriptedPredictor,
    evaluate_end_to_end,
    evaluate_turn_by_turn,
    tsr_dsr,
)
from .alignment import (
    AlignedEntity,
    AttentionMatrix,
    CandidateSet,
    NormConfig,
    WordAlignment,
    align_by_embeddings,
    codemix_substitute,
    dictionary_align,
    hybrid_align,
    neural_align,
    project_annotations,
)
from .checker import (
    apply_fixes,
    build_value_mapping,
    check_api,
    check_dataset,
    check_entities,
    check_value_consistency,
    diff_upstream,
)
from .perturb import (
    EnsembleFilter,
    ErrorStats,
    LabeledExample,
    SynthConfig,
    collect_error_stats,
    ensemble_filter,
    perturb_da,
    perturb_dst,
    select_self_training,
    synthesize_dataset,
)

__version__ = "0.1.0"
