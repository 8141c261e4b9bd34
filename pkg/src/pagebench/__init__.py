"""Section-wise webpage benchmark pipeline.

Crawls real pages into a structured per-section representation, distills
design instructions, drives instruction-to-HTML generation through an LLM
gateway, evaluates results section by section on nine metrics, and runs
the generate-evaluate-refine loop with the accompanying analytics.
"""

__version__ = "0.1.0"
