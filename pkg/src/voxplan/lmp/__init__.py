from .cache import ProgramCache, scene_names_signature
from .client import ChatCompletionsClient, EndpointConfig, extract_code_block
from .interpreter import InterpreterContext, LmpKind, interpret
from .parser import parse_program, program_source
from .pipeline import (
    LmpSession,
    MapSource,
    compose,
    execute,
    llm_generate,
    plan_subtasks,
    run_instruction,
)
from ..geometry import pointat2quat
