"""Closed-loop embodied-planning benchmark at desk scale.

Simulated tabletop and kitchen environments, textual feedback channels
(object recognition, success detection, task-progress scene description,
human Q&A), bit-exact transcript grammars, pluggable planners, and a
benchmark harness for feedback-ablation experiments.
"""

from .errors import (AuthError, BackendUnavailable, DialectMismatch,
                     FeedloopError, FixtureMiss, InvalidTarget,
                     MalformedGoalList, NoFeasibleAction, PromptDivergence,
                     SamplingExhausted, UnaffordedSkill, UnknownObjectInGoal,
                     UnknownTask, UnparseableCompletion)
from .feedback import (FeedbackConfig, InteractiveHuman, NoisyDetector,
                       OcclusionTracker, ScriptedHuman, object_feedback,
                       scene_feedback, success_feedback)
from .harness import (BenchmarkCell, BenchmarkReport, EpisodeConfig,
                      EpisodeResult, KitchenEpisode, TabletopScenario,
                      attribute_failure, replay_episode, result_from_json,
                      result_to_json, run_benchmark, run_episode)
from .kitchen import (KITCHEN_TASKS, KitchenScenario, KitchenState, Skill,
                      SkillOutcomeModel, affordance_filter, all_skills,
                      default_scenario, execute_skill, kitchen_goal_satisfied)
from .planner import (KitchenOracle, LLMPlanner, OraclePolicy, PlannerQuery,
                      TabletopOracle, infer_goals)
from .completion import (CannedBackend, ClientConfig, CompletionClient,
                         CompletionRequest, ReplayBackend, SequenceBackend,
                         complete, mock_from_listing)
from .tabletop import (COLORS, LOCATIONS, NoiseConfig, ObjectSpec,
                       TabletopState, TabletopTask, TaskFamily,
                       apply_disturbance, execute_pick_place, goal_satisfied,
                       init_episode, on_predicate, sample_episode)
from .transcript import (DIALECTS, KITCHEN, KITCHEN_ACTIVE, REAL, SIM,
                         AchievedSubgoals, Ask, Corpus, Entry, HumanAnswer,
                         Instruction, ParsedAction, RobotAction, RobotThought,
                         SceneObjects, SubGoal, Success, Terminate, Transcript,
                         load_golden, load_golden_text, parse_completion,
                         parse_corpus, parse_goal_state, parse_transcript,
                         render_prompt, render_transcript)

__version__ = "0.1.0"
