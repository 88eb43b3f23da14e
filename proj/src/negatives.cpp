#include "radiart/losses.hpp"

namespace radiart {

const std::vector<std::string>& default_negative_bank() {
    static const std::vector<std::string> bank = {
        "watercolor rendering",
        "an object in watercolor style",
        "oil painting rendering",
        "an object in oil painting style",
        "pencil sketch rendering",
        "an object in pencil sketch style",
        "charcoal drawing rendering",
        "an object in charcoal drawing style",
        "ink wash rendering",
        "an object in ink wash style",
        "pointillism rendering",
        "an object in pointillism style",
        "cubism rendering",
        "an object in cubism style",
        "impressionism rendering",
        "an object in impressionism style",
        "expressionism rendering",
        "an object in expressionism style",
        "surrealism rendering",
        "an object in surrealism style",
        "pop art rendering",
        "an object in pop art style",
        "art nouveau rendering",
        "an object in art nouveau style",
        "art deco rendering",
        "an object in art deco style",
        "baroque rendering",
        "an object in baroque style",
        "rococo rendering",
        "an object in rococo style",
        "renaissance fresco rendering",
        "an object in renaissance fresco style",
        "ukiyo-e woodblock rendering",
        "an object in ukiyo-e woodblock style",
        "stained glass rendering",
        "an object in stained glass style",
        "mosaic tiles rendering",
        "an object in mosaic tiles style",
        "low poly rendering",
        "an object in low poly style",
        "pixel art rendering",
        "an object in pixel art style",
        "vaporwave rendering",
        "an object in vaporwave style",
        "cyberpunk neon rendering",
        "an object in cyberpunk neon style",
        "steampunk brass rendering",
        "an object in steampunk brass style",
        "gothic rendering",
        "an object in gothic style",
        "minimalist line art rendering",
        "an object in minimalist line art style",
        "graffiti rendering",
        "an object in graffiti style",
        "comic book rendering",
        "an object in comic book style",
        "manga rendering",
        "an object in manga style",
        "anime cel shading rendering",
        "an object in anime cel shading style",
        "claymation rendering",
        "an object in claymation style",
        "papercraft rendering",
        "an object in papercraft style",
        "origami rendering",
        "an object in origami style",
        "embroidery rendering",
        "an object in embroidery style",
        "knitted wool rendering",
        "an object in knitted wool style",
        "marble sculpture rendering",
        "an object in marble sculpture style",
        "bronze statue rendering",
        "an object in bronze statue style",
        "porcelain rendering",
        "an object in porcelain style",
        "wood carving rendering",
        "an object in wood carving style",
        "chalk on blackboard rendering",
        "an object in chalk on blackboard style",
        "crayon drawing rendering",
        "an object in crayon drawing style",
        "pastel drawing rendering",
        "an object in pastel drawing style",
        "gouache rendering",
        "an object in gouache style",
        "acrylic pour rendering",
        "an object in acrylic pour style",
        "fauvism rendering",
        "an object in fauvism style",
        "futurism rendering",
        "an object in futurism style",
        "constructivism rendering",
        "an object in constructivism style",
        "bauhaus rendering",
        "an object in bauhaus style",
        "psychedelic poster rendering",
        "an object in psychedelic poster style",
        "tribal pattern rendering",
        "an object in tribal pattern style",
        "aboriginal dot painting rendering",
        "an object in aboriginal dot painting style",
        "chinese ink landscape rendering",
        "an object in chinese ink landscape style",
        "persian miniature rendering",
        "an object in persian miniature style",
        "byzantine icon rendering",
        "an object in byzantine icon style",
        "egyptian hieroglyph rendering",
        "an object in egyptian hieroglyph style",
        "mayan relief rendering",
        "an object in mayan relief style",
        "blueprint rendering",
        "an object in blueprint style",
        "technical schematic rendering",
        "an object in technical schematic style",
        "x-ray rendering",
        "an object in x-ray style",
        "thermal camera rendering",
        "an object in thermal camera style",
        "infrared photograph rendering",
        "an object in infrared photograph style",
        "sepia photograph rendering",
        "an object in sepia photograph style",
        "daguerreotype rendering",
        "an object in daguerreotype style",
        "polaroid rendering",
        "an object in polaroid style",
        "film noir rendering",
        "an object in film noir style",
        "technicolor rendering",
        "an object in technicolor style",
        "glitch art rendering",
        "an object in glitch art style",
        "double exposure rendering",
        "an object in double exposure style",
        "tilt-shift miniature rendering",
        "an object in tilt-shift miniature style",
        "bokeh night rendering",
        "an object in bokeh night style",
        "neon sign rendering",
        "an object in neon sign style",
        "holographic foil rendering",
        "an object in holographic foil style",
        "chrome metal rendering",
        "an object in chrome metal style",
        "frosted glass rendering",
        "an object in frosted glass style",
        "ice sculpture rendering",
        "an object in ice sculpture style",
        "lava and fire rendering",
        "an object in lava and fire style",
        "smoke and mist rendering",
        "an object in smoke and mist style",
        "underwater caustics rendering",
        "an object in underwater caustics style",
        "autumn leaves rendering",
        "an object in autumn leaves style",
        "spring blossoms rendering",
        "an object in spring blossoms style",
        "winter snow rendering",
        "an object in winter snow style",
        "desert sand rendering",
        "an object in desert sand style",
        "jungle vines rendering",
        "an object in jungle vines style",
        "starry night sky rendering",
        "an object in starry night sky style",
        "galaxy nebula rendering",
        "an object in galaxy nebula style",
        "aurora borealis rendering",
        "an object in aurora borealis style",
        "sunset gradient rendering",
        "an object in sunset gradient style",
        "thunderstorm rendering",
        "an object in thunderstorm style",
        "candlelight rendering",
        "an object in candlelight style",
        "moonlit scene rendering",
        "an object in moonlit scene style",
        "gold leaf rendering",
        "an object in gold leaf style",
        "silver filigree rendering",
        "an object in silver filigree style",
        "jade carving rendering",
        "an object in jade carving style",
        "ruby crystal rendering",
        "an object in ruby crystal style",
        "emerald gemstone rendering",
        "an object in emerald gemstone style",
        "sapphire glow rendering",
        "an object in sapphire glow style",
        "rusty iron rendering",
        "an object in rusty iron style",
        "weathered copper rendering",
        "an object in weathered copper style",
        "mossy stone rendering",
        "an object in mossy stone style",
        "lego bricks rendering",
        "an object in lego bricks style",
    };
    return bank;
}

}  // namespace radiart
