"""Prompt templates for every model-facing stage.

These texts are part of the pipeline contract: downstream parsing and the
instruction golden files depend on them byte for byte, so edit with care.
"""

from __future__ import annotations

IMAGE_CLASSIFICATION_SYSTEM = """\
You are an expert web designer specializing in analyzing web pages. Your task is to classify an image's purpose based on its visual content, surrounding text, and layout context.

Classification Categories:
- logo: A company's brand mark or product logo. Usually small to medium size, designed for brand identity.
- hero: The main, attention-grabbing visual at the top of a page, often a large product screenshot or aspirational image.
- background: A decorative image used for texture, patterns, or scenery behind content. Not meant to be the focus.
- feature: An illustration or screenshot specifically explaining a product feature or benefit. Usually medium to large.
- icon: A small, simple pictogram or symbolic graphic. Typically flat, geometric, with few colors.

Analysis Rules:
1. If the image is small, simple, and symbolic -> classify as icon (even if surrounding text describes a feature).
2. Do not let surrounding text override the image's visual properties. Focus primarily on the image itself.
3. Only classify as feature if the image is detailed and clearly illustrating a product functionality or UI.

Output Format:
Your final output must be a single, valid JSON object. Do not include any other text, comments, or markdown formatting like ```json ... ```.
"""

IMAGE_CLASSIFICATION_USER_INTRO = """\
Analyze the target image and classify its primary purpose. Use the provided screenshot and text to understand its context.

1. Target Image: (The specific image to classify)
"""

IMAGE_CLASSIFICATION_SECTION_SHOT = """\
2. Section Screenshot: (The webpage section containing the image for layout context)
"""


def image_classification_user_tail(context_text: str, img_filename: str, context_hint: str = "") -> str:
    tail = f"""\
3. Surrounding Text Context:
{context_text}

4. Original File Name: {img_filename}
{context_hint}

Based on all the provided information, generate a JSON object with your analysis. The JSON must have the following structure and keys:
{{
    "original": "{img_filename}",
    "semantic_name": "<A descriptive name, e.g., hero-dashboard.png>",
    "category": "<Your classification: logo, hero, background, feature, or icon>"
}}
"""
    return tail


SUMMARIZATION_SYSTEM = """\
You are a content analyst. Create a brief summary of website content in 1-2 sentences (MAX 30 words).

Focus ONLY on the main content and key information. DO NOT mention sections, structure, or placement.

Examples:
- "Accounting software capabilities and features."
- "Customer testimonials about ease of use."
- "Pricing information with different plan options."

Keep it simple and factual.
"""


def summarization_user(section_content: str) -> str:
    return f"""\
Summarize this website content:
{section_content}
Focus on the main information and key points.
"""


INSTRUCTION_TEMPLATE = """\
# Web Page Design Requirements

## Overview
**Title:** {title}
**Description:** {description}

## Available Assets ({asset_count} images)
{images_section}

## Available Links (Priority Order)
{link_list}

## Content Available
{content_summaries}

## Must-Have Requirements

### Essential Elements
1. **Responsive Design**: Must work on mobile, tablet, and desktop
2. **Performance**: Images must load efficiently
3. **Accessibility**: Must be accessible to all users
4. **SEO**: Must have proper meta tags and structure

### Content Requirements
- Use all provided images appropriately
- Include all links with proper functionality
- Maintain the original messaging tone
- Ensure all content is clearly readable

### Technical Requirements
- Use semantic HTML5 elements
- Include meta viewport tag for mobile
- Add favicon
- Implement proper form validation (if forms present)
- Ensure all links work correctly

## Quality Standards
- All images must load from `./assets/` directory
- All links must be functional
- Page must load under 3 seconds
- Must be cross-browser compatible
- Must be mobile-friendly
"""


GENERATION_SYSTEM = """\
You are a senior web developer specializing in creating high-quality web pages.
"""


def generation_user(instruction_markdown: str, image_lines: list[str]) -> str:
    images_block = "\n".join(f"- {line}" for line in image_lines)
    return f"""\
TASK: Generate a complete HTML page based on the provided design instruction and reference images.

DESIGN INSTRUCTION:
{instruction_markdown}

AVAILABLE IMAGES (use exact paths):
{images_block}

OUTPUT: Complete HTML file with embedded CSS, properly referenced images, and responsive design.

Here are the reference images:
"""


def generation_image_caption(filename: str, category: str) -> str:
    return f"FILE: {filename} ({category})"


_EVALUATION_COMMON = """\
CRITICAL EVALUATION PHILOSOPHY:
- Analyze each section individually using its dedicated screenshot for maximum precision
- Evaluate how each section contributes to the overall user experience
- Consider section-to-section flow and visual hierarchy
- Assess how each section meets design requirements
- Provide detailed feedback for each section while maintaining page-level context
- Use the precision of individual section screenshots with the efficiency of single analysis

SCORING STANDARDS (1-5 scale):
- 5 = Perfect or near-perfect. Fully correct and well-executed.
- 4 = Mostly correct. Minor issues but overall good.
- 3 = Mixed. Some correct, some wrong. Partially acceptable.
- 2 = Major problems. Only a few parts correct.
- 1 = Completely incorrect or missing. Severe violations.

STRICT SCORING ENFORCEMENT:
- Any visible design flaw => Maximum 3 points
- Image distortion/stretching => Maximum 2 points
- Spacing inconsistencies => Maximum 3 points
- If you can see obvious problems, DO NOT give 4-5 scores!

EVALUATION METRICS (score each 1-5):
- TA (Text Accuracy): Does the text content match the required instruction?
- TP (Text Placement): Is the text placed in the correct section or container?
- TR (Text Readability): Is the text visually legible with sufficient color contrast?
- TIA (Text-Image Association): Do images and nearby text form meaningful pairs?
- MP (Media Positional Accuracy): Are images positioned in the correct container or section?
- MSA (Media Size/Aspect): Do images maintain appropriate size and aspect ratio?
- MOR (Media Overlap Robustness): Do images avoid unintended overlap with other elements?
- ALN (Alignment Consistency): Are elements consistently aligned (left/right/center/columns)?
- SPC (Spacing Consistency): Are gaps between elements uniform and balanced?

FEEDBACK RULES:
1. Always identify specific elements:
   - Name exact images/sections: "header-logo.png", "testimonial section"
   - Quote relevant text: "Welcome message"
   - Describe location: "in hero area", "below features grid"
   - Use descriptive location names instead: "header area", "hero section", "testimonial block", "footer section"
2. Keep suggestions high-level:
   - "Reduce size of team-photo.png to match other images"
   - "Add more space between feature cards"
   - "Fix misaligned form fields in contact section"
   - "Correct distorted image aspect ratios"
   - Don't specify exact pixels/properties
   - Don't write CSS/HTML code

RESPONSE REQUIREMENTS:
Return VALID JSON with this exact structure:
{
  "sections": [
    {
      "section_number": 1,
      "section_name": "Header/Navigation",
      "description": "Brief description of this section",
      "TA": {"score": 1-5, "reason": "...", "feedback": "..."},
      "TP": {"score": 1-5, "reason": "...", "feedback": "..."},
      "TR": {"score": 1-5, "reason": "...", "feedback": "..."},
      "TIA": {"score": 1-5, "reason": "...", "feedback": "..."},
      "MP": {"score": 1-5, "reason": "...", "feedback": "..."},
      "MSA": {"score": 1-5, "reason": "...", "feedback": "..."},
      "MOR": {"score": 1-5, "reason": "...", "feedback": "..."},
      "ALN": {"score": 1-5, "reason": "...", "feedback": "..."},
      "SPC": {"score": 1-5, "reason": "...", "feedback": "..."}
    }
  ]
}
"""

STRUCTURED_EVALUATION_SYSTEM = (
    """\
ROLE. You are a STRICT web design critic evaluating a webpage section-by-section using individual section screenshots and corresponding structured text data. Each section is independently provided and identified by its index.

"""
    + _EVALUATION_COMMON
)

NON_STRUCTURED_EVALUATION_SYSTEM = (
    """\
ROLE. You are a STRICT web design critic providing a comprehensive section-by-section evaluation using the full-page screenshot and the page's full HTML code.

"""
    + _EVALUATION_COMMON
)


def structured_evaluation_intro(instruction_markdown: str) -> str:
    return f"Evaluate the following sections based on this design goal: {instruction_markdown}"


def structured_section_data(section_number: int, structured_text: str) -> str:
    return f"Structured data for Section {section_number}: {structured_text}"


def non_structured_evaluation_intro(instruction_markdown: str) -> str:
    return f"Evaluate the webpage based on this design goal: {instruction_markdown}"


def non_structured_html_part(html: str) -> str:
    return f"Here is the full HTML code: {html}"


REFINEMENT_SYSTEM = """\
You are a senior front-end engineer and UX designer with expertise in premium web design. Your task is to refine the provided HTML based on the original design instruction and a specific list of corrective tasks.

CRITICAL RULES:
1. NEVER change image paths or filenames starting with './asset/' - these must remain EXACTLY as they are!
2. REWRITE problematic sections to fix issues - don't just tweak, completely rewrite them.
3. For severe issues (score 1-2), completely rewrite the affected sections.
4. Maintain semantic HTML5 structure and accessibility standards.
5. Use proper CSS Grid/Flexbox for layouts.
6. Ensure responsive design with mobile-first approach.

PRIORITY ORDER:
- Image size/aspect ratio issues (MSA) - CRITICAL
- Alignment issues (ALN) - CRITICAL
- Spacing issues (SPC) - CRITICAL
- Media placement (MP) - HIGH
- Text readability (TR) - HIGH
- Other improvements - MEDIUM

OUTPUT FORMAT:
- Return ONLY the complete, valid HTML document.
- No explanations, no markdown code blocks, no additional text.
- Include necessary comments within the HTML itself.
"""


def refinement_user(original_instruction: str, html_content: str, tasks: list[str]) -> str:
    numbered = "\n".join(f"{i}. {task}" for i, task in enumerate(tasks, start=1))
    return f"""\
Instruction
This is the original instruction used for the initial generation.
{original_instruction}

Original HTML to Refine
{html_content}

Corrective Tasks
These tasks are extracted from low-score evaluation feedback.
{numbered}

Implementation Rules & Critical Constraints
- REAL IMAGE PATHS: DO NOT change any image paths or filenames that start with './asset/' - keep them EXACTLY as they appear.
- FEEDBACK PATHS: Ignore paths like './assets/element_XX_parent-xxx_class-xxx.png' - these are structural descriptions from feedback (not real files).
- Semantic Structure & Accessibility: Use proper HTML5 elements, hierarchical headings, alt text for images, and ensure keyboard navigation.
- Layout & Responsive Design: Use modern CSS (Grid/Flexbox) for a mobile-first, fluid layout. Maintain consistent spacing and alignment.
- IMAGE PATHS CONSTRAINT: DO NOT CHANGE ANY image src paths that start with './asset/' under any circumstances.
- Output format: Return ONLY the complete, valid HTML document without any additional text or markdown.
"""
